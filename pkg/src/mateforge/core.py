"""Main entry point and subcommand dispatch for mateforge."""

import argparse
import logging
import sys
from dataclasses import replace

from mateforge.cli import (
    EXIT_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    configure_logging,
    create_argument_parser,
    load_or_report,
    output_stem,
    prepare_output_directory,
    print_diagnostics,
    session_directory,
    validate_input_file,
)
from mateforge.compiler import CompileResult, compile_assembly
from mateforge.diagnostics import has_errors
from mateforge.export import write_mesh
from mateforge.ir import validate_assembly
from mateforge.render import ViewSpec, render_compiled, render_sweep
from mateforge.solver import solve_report
from mateforge.visual import assign_visual_ids, legend_json, legend_text

logger = logging.getLogger(__name__)


def _compile(args: argparse.Namespace) -> CompileResult | None:
    definition = load_or_report(args.assembly)
    if definition is None:
        return None
    return compile_assembly(definition, dict(args.pin))


def cmd_check(args: argparse.Namespace) -> int:
    """Validate an assembly file."""
    definition = load_or_report(args.assembly)
    if definition is None:
        return EXIT_FAILED
    diagnostics = validate_assembly(definition)
    print_diagnostics(diagnostics)
    return EXIT_FAILED if has_errors(diagnostics) else EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    """Solve and write ``<stem>.solve.json``; the report is written even when the solve fails."""
    result = _compile(args)
    if result is None:
        return EXIT_FAILED
    print_diagnostics(result.diagnostics)
    if result.outcome is None:
        return EXIT_FAILED
    extra = [d for d in result.diagnostics if d not in result.outcome.diagnostics]
    out = prepare_output_directory(args.out)
    report = out / f"{output_stem(args.assembly)}.solve.json"
    report.write_text(solve_report(result.outcome, extra), encoding="utf-8")
    print(f"Wrote {report}")
    return EXIT_OK if result.ok else EXIT_FAILED


def cmd_render(args: argparse.Namespace) -> int:
    """Render one SVG per requested view plus the legend."""
    result = _compile(args)
    if result is None:
        return EXIT_FAILED
    print_diagnostics(result.diagnostics)
    if result.outcome is None or result.visual_map is None:
        return EXIT_FAILED
    out = prepare_output_directory(args.out)
    stem = output_stem(args.assembly)
    for camera in args.views:
        document = render_compiled(result, ViewSpec(camera, args.width, args.height))
        if document is None:
            continue
        path = out / f"{stem}_{camera}.svg"
        path.write_text(document, encoding="utf-8")
        print(f"Wrote {path}")
    (out / "legend.json").write_text(legend_json(result.visual_map), encoding="utf-8")
    return EXIT_FAILED if has_errors(result.diagnostics) else EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Render a revolute joint at each requested angle."""
    definition = load_or_report(args.assembly)
    if definition is None:
        return EXIT_FAILED
    view = ViewSpec(args.view, args.width, args.height, dict(args.pin))
    sweep = render_sweep(definition, args.joint, args.angles, view)
    print_diagnostics(sweep.diagnostics)
    out = prepare_output_directory(args.out)
    stem = output_stem(args.assembly)
    failed = bool(sweep.diagnostics and has_errors(sweep.diagnostics))
    for frame in sweep.frames:
        print_diagnostics(frame.diagnostics)
        failed = failed or has_errors(frame.diagnostics)
        path = out / f"{stem}_{args.joint}_{frame.angle:g}.svg"
        path.write_text(frame.document, encoding="utf-8")
        print(f"Wrote {path}")
    if sweep.frames:
        (out / "legend.json").write_text(legend_json(assign_visual_ids(definition)), encoding="utf-8")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_ids(args: argparse.Namespace) -> int:
    """Print the visual legend, optionally writing legend.json."""
    definition = load_or_report(args.assembly)
    if definition is None:
        return EXIT_FAILED
    visual_map = assign_visual_ids(definition)
    sys.stdout.write(legend_text(visual_map))
    if args.out is not None:
        out = prepare_output_directory(args.out)
        (out / "legend.json").write_text(legend_json(visual_map), encoding="utf-8")
    print_diagnostics(visual_map.diagnostics)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    """Write the solved assembly as a mesh."""
    result = _compile(args)
    if result is None:
        return EXIT_FAILED
    print_diagnostics(result.diagnostics)
    if result.outcome is None or result.definition is None:
        return EXIT_FAILED
    out = prepare_output_directory(args.out)
    path = write_mesh(result.definition, result.poses, out / f"{output_stem(args.assembly)}.{args.format}", args.format)
    print(f"Wrote {path}")
    return EXIT_FAILED if has_errors(result.diagnostics) else EXIT_OK


def cmd_agent(args: argparse.Namespace) -> int:
    """Run a builder session; exit 0 accepted, 1 budget exhausted, 2 aborted."""
    from mateforge.agent import ClientError, HttpChatClient, Outcome, ReplayClient, SessionConfig, TaskInput, run_session  # noqa: PLC0415
    from mateforge.agent.loop import Pricing  # noqa: PLC0415

    validate_input_file(args.task)
    try:
        task = TaskInput.from_file(args.task)
    except (OSError, ValueError) as e:
        print(f"Error: Invalid task file '{args.task}': {e}")
        return EXIT_USAGE
    if args.budget is not None:
        task = replace(task, max_iterations=args.budget)

    directory = session_directory(args.task, args.out)
    if not args.overwrite and directory.is_dir() and any(directory.iterdir()):
        print(f"Error: Session directory '{directory}' is not empty; pass --overwrite to reuse it")
        return EXIT_USAGE

    config = SessionConfig(views=args.views, joint_details=args.joint_details)
    try:
        if args.replay is not None:
            validate_input_file(args.replay)
            client = ReplayClient.from_transcript(args.replay)
            # Replays report zero wall time and never wait, so their outputs are byte-stable.
            config = replace(config, clock=lambda: 0.0, sleep=lambda _: None)
        else:
            client = HttpChatClient.from_env()
            config = replace(config, pricing=Pricing.from_env())
    except (ClientError, ValueError) as e:
        print(f"Error: {e}")
        return EXIT_USAGE

    prepare_output_directory(directory)
    session = run_session(task, client, directory, config)
    print(f"{session.outcome} after {len(session.iterations)} iteration(s); session in {directory}")
    if session.outcome is Outcome.ACCEPTED:
        return EXIT_OK
    return EXIT_FAILED if session.outcome is Outcome.BUDGET_EXHAUSTED else EXIT_USAGE


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "render": cmd_render,
    "sweep": cmd_sweep,
    "ids": cmd_ids,
    "export": cmd_export,
    "agent": cmd_agent,
}


def main(argv: list[str] | None = None) -> None:
    """Run the mateforge tool."""
    parser = create_argument_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    logger.debug("Running %s", args.command)

    try:
        code = COMMANDS[args.command](args)
    except OSError as e:
        print(f"Error: {e}")
        code = EXIT_USAGE
    sys.exit(code)


def run(argv: list[str]) -> int:
    """Call ``main`` and return its exit status instead of raising SystemExit."""
    try:
        main(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    return EXIT_OK


__all__ = ["main", "run"]
