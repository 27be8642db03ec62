"""Command-line interface and argument parsing for mateforge."""

import argparse
import logging
import sys
from collections.abc import Iterable
from pathlib import Path

from mateforge.diagnostics import Diagnostic, to_json_lines
from mateforge.export import MeshFormat
from mateforge.ir import ASSEMBLY_SUFFIX, AssemblyDef, load_assembly
from mateforge.render import DEFAULT_CAMERAS, Camera

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def parse_views(text: str) -> tuple[Camera, ...]:
    """Parse ``front,top,right,iso``."""
    names = [name.strip().lower() for name in text.split(",") if name.strip()]
    try:
        return tuple(Camera(name) for name in names)
    except ValueError:
        choices = ", ".join(camera.value for camera in Camera)
        msg = f"invalid view list {text!r}; choose from {choices}"
        raise argparse.ArgumentTypeError(msg) from None


def parse_angles(text: str) -> list[float]:
    """Parse ``0,20,40,60`` (an empty string means no angles)."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        msg = f"invalid angle list {text!r}"
        raise argparse.ArgumentTypeError(msg) from None


def parse_pin(text: str) -> tuple[str, float]:
    """Parse ``JOINT=DEG``."""
    joint, sep, degrees = text.partition("=")
    try:
        if not sep or not joint.strip():
            raise ValueError
        return joint.strip(), float(degrees)
    except ValueError:
        msg = f"invalid pin {text!r}; expected JOINT=DEG"
        raise argparse.ArgumentTypeError(msg) from None


def _add_common(parser: argparse.ArgumentParser, *, pins: bool = True, out: bool = True) -> None:
    if pins:
        parser.add_argument(
            "--pin",
            action="append",
            type=parse_pin,
            default=[],
            metavar="JOINT=DEG",
            help="Hold a revolute joint at an angle in degrees (repeatable)",
        )
    if out:
        parser.add_argument(
            "-o",
            "--out",
            type=Path,
            default=Path.cwd(),
            help="Output directory (default: current directory)",
        )


def _add_size(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--width", type=int, default=800, help="Image width in pixels (default: 800)")
    parser.add_argument("--height", type=int, default=600, help="Image height in pixels (default: 600)")


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = argparse.ArgumentParser(
        prog="mateforge",
        description="Validate, solve, render, and agent-build jointed box assemblies",
        epilog="""
Examples:
  %(prog)s check scissors.asm.json                  # Structural diagnostics as JSON lines
  %(prog)s solve scissors.asm.json --pin hinge=40   # Write solve.json
  %(prog)s render scissors.asm.json --views front,iso -o renders
  %(prog)s sweep scissors.asm.json hinge --angles 0,20,40,60 -o sweep
  %(prog)s ids scissors.asm.json                    # Print the color/texture legend
  %(prog)s export scissors.asm.json --format stl
  %(prog)s agent task.json -o session --budget 20
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Log progress to stderr (-v info, -vv debug)",
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    check = commands.add_parser("check", help="Validate an assembly file")
    check.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")

    solve = commands.add_parser("solve", help="Solve link poses and write a JSON report")
    solve.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")
    _add_common(solve)

    render = commands.add_parser("render", help="Render SVG views of the solved assembly")
    render.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")
    render.add_argument(
        "--views",
        type=parse_views,
        default=DEFAULT_CAMERAS,
        help="Comma-separated views: front, top, right, iso (default: all)",
    )
    _add_size(render)
    _add_common(render)

    sweep = commands.add_parser("sweep", help="Render a revolute joint at several angles")
    sweep.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")
    sweep.add_argument("joint", help="Revolute joint to sweep")
    sweep.add_argument("--angles", type=parse_angles, default=[0.0, 20.0, 40.0, 60.0], help="Angles in degrees")
    sweep.add_argument("--view", type=Camera, default=Camera.ISOMETRIC, choices=list(Camera), help="Camera")
    _add_size(sweep)
    _add_common(sweep)

    ids = commands.add_parser("ids", help="Print the visual identifier legend")
    ids.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")
    ids.add_argument("-o", "--out", type=Path, help="Also write legend.json into this directory")

    export = commands.add_parser("export", help="Export the solved assembly as STL or OBJ")
    export.add_argument("assembly", type=Path, help="Assembly file (*.asm.json)")
    export.add_argument("--format", type=MeshFormat, default=MeshFormat.STL, choices=list(MeshFormat))
    _add_common(export)

    agent = commands.add_parser("agent", help="Run the model-in-the-loop builder on a task file")
    agent.add_argument("task", type=Path, help="Task file (JSON with images, description, budget)")
    agent.add_argument("--budget", type=int, help="Maximum iterations (overrides the task file)")
    agent.add_argument("--replay", type=Path, metavar="TRANSCRIPT", help="Replay responses from a transcript")
    agent.add_argument("--views", type=parse_views, default=DEFAULT_CAMERAS, help="Views fed back to the model")
    agent.add_argument("--joint-details", action="store_true", help="Also render each joint in isolation")
    _add_common(agent, pins=False, out=False)
    agent.add_argument(
        "-o",
        "--out",
        type=Path,
        help="Session directory (default: <task>-session in the current directory)",
    )
    agent.add_argument("--overwrite", action="store_true", help="Reuse a session directory that is not empty")

    return parser


def configure_logging(verbosity: int) -> None:
    """Send log records to stderr so stdout stays machine-readable."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def validate_input_file(path: Path) -> None:
    """Exit with status 2 unless ``path`` is a readable file."""
    if not path.exists():
        print(f"Error: File '{path}' does not exist")
        sys.exit(EXIT_USAGE)
    if not path.is_file():
        print(f"Error: '{path}' is not a file")
        sys.exit(EXIT_USAGE)


def prepare_output_directory(directory: Path) -> Path:
    """Create the output directory, exiting with status 2 when that fails."""
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"Error: Could not create output directory '{directory}': {e}")
        sys.exit(EXIT_USAGE)
    return directory


def print_diagnostics(diagnostics: Iterable[Diagnostic]) -> None:
    """Diagnostics to stdout, one JSON object per line."""
    sys.stdout.write(to_json_lines(diagnostics))


def load_or_report(path: Path) -> AssemblyDef | None:
    """Load an assembly; on failure print its diagnostics and return None."""
    validate_input_file(path)
    loaded = load_assembly(path)
    if isinstance(loaded, list):
        print_diagnostics(loaded)
        return None
    return loaded


def output_stem(path: Path) -> str:
    """``scissors.asm.json`` -> ``scissors``."""
    name = path.name
    return name.removesuffix(ASSEMBLY_SUFFIX) if name.endswith(ASSEMBLY_SUFFIX) else path.stem


def session_directory(task: Path, out: Path | None) -> Path:
    """``--out``, or ``<task stem>-session`` in the current directory."""
    return out if out is not None else Path.cwd() / f"{task.stem}-session"
