"""Tests for the mateforge command line."""

import argparse
import json
from pathlib import Path
from unittest.mock import patch

import pytest

from mateforge.agent.client import ClientError, HttpChatClient
from mateforge.cli import create_argument_parser, output_stem, parse_angles, parse_pin, parse_views, session_directory
from mateforge.core import run
from mateforge.render import DEFAULT_CAMERAS, Camera
from tests.conftest import SCISSORS, assembly_text


class TestArgumentParser:
    """Tests for the argument parser."""

    def test_solve_defaults(self) -> None:
        """Test default values of the solve command."""
        args = create_argument_parser().parse_args(["solve", "a.asm.json"])
        assert args.command == "solve"
        assert args.assembly == Path("a.asm.json")
        assert args.pin == []
        assert args.out == Path.cwd()
        assert args.verbose == 0

    def test_sweep_defaults(self) -> None:
        """Test default angles and camera of the sweep command."""
        args = create_argument_parser().parse_args(["sweep", "a.asm.json", "hinge"])
        assert args.angles == [0.0, 20.0, 40.0, 60.0]
        assert args.view is Camera.ISOMETRIC
        assert (args.width, args.height) == (800, 600)

    def test_render_options(self) -> None:
        """Test views, size, repeated pins, and verbosity."""
        args = create_argument_parser().parse_args(
            ["-vv", "render", "a.asm.json", "--views", "front,iso", "--width", "320", "--pin", "hinge=30", "--pin", "elbow=-5"],
        )
        assert args.views == (Camera.FRONT, Camera.ISOMETRIC)
        assert args.width == 320
        assert args.pin == [("hinge", 30.0), ("elbow", -5.0)]
        assert args.verbose == 2
        assert create_argument_parser().parse_args(["render", "a.asm.json"]).views == DEFAULT_CAMERAS

    def test_command_required(self) -> None:
        """Test that a subcommand must be given."""
        with pytest.raises(SystemExit):
            create_argument_parser().parse_args([])

    def test_value_parsers(self) -> None:
        """Test the list and pin parsers."""
        assert parse_angles("") == []
        assert parse_angles("0, 12.5,-30") == [0.0, 12.5, -30.0]
        assert parse_views(" TOP ,right") == (Camera.TOP, Camera.RIGHT)
        assert parse_pin(" hinge = 40") == ("hinge", 40.0)

    @pytest.mark.parametrize("text", ["hinge", "=40", "hinge=wide"])
    def test_bad_pins(self, text: str) -> None:
        """Test malformed pins."""
        with pytest.raises(argparse.ArgumentTypeError, match="JOINT=DEG"):
            parse_pin(text)

    def test_bad_views_and_angles(self) -> None:
        """Test malformed view and angle lists."""
        with pytest.raises(argparse.ArgumentTypeError, match="choose from"):
            parse_views("front,side")
        with pytest.raises(argparse.ArgumentTypeError):
            parse_angles("0,ten")

    def test_output_stem(self) -> None:
        """Test output file stems."""
        assert output_stem(Path("dir/scissors.asm.json")) == "scissors"
        assert output_stem(Path("model.json")) == "model"


class TestCheckCommand:
    """Tests for the check command."""

    def test_valid_assembly(self, scissors_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that a valid assembly exits 0 with no error lines."""
        assert run(["check", str(scissors_file)]) == 0
        assert '"severity":"error"' not in capsys.readouterr().out

    def test_missing_part(self, temp_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that a link naming an unknown part is reported."""
        document = json.loads(assembly_text(SCISSORS))
        document["links"][1]["part"] = "sword"
        path = temp_dir / "broken.asm.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert run(["check", str(path)]) == 1
        codes = [json.loads(line)["code"] for line in capsys.readouterr().out.splitlines()]
        assert "UnresolvedReference" in codes

    def test_nonexistent_file(self, temp_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that a missing input file is a usage error."""
        assert run(["check", str(temp_dir / "nope.asm.json")]) == 2
        assert "does not exist" in capsys.readouterr().out


class TestSolveCommand:
    """Tests for the solve command."""

    def test_writes_report(self, temp_dir: Path, two_cubes_file: Path) -> None:
        """Test the solve report of two stacked cubes."""
        out = temp_dir / "out"
        assert run(["solve", str(two_cubes_file), "-o", str(out)]) == 0
        report = json.loads((out / "two_cubes.solve.json").read_text(encoding="utf-8"))
        assert report["converged"] is True
        assert report["poses"]["top"]["position"] == [0, 0, 30]
        assert report["poses"]["top"]["quaternion"] == [1, 0, 0, 0]

    def test_pinned_hinge(self, temp_dir: Path, scissors_file: Path) -> None:
        """Test that a pin is reflected in the reported joint angle."""
        assert run(["solve", str(scissors_file), "--pin", "hinge=40", "-o", str(temp_dir)]) == 0
        report = json.loads((temp_dir / "scissors.solve.json").read_text(encoding="utf-8"))
        assert report["joint_angles"]["hinge"] == pytest.approx(40.0)
        assert report["dof"] == 0

    def test_failed_solve_still_reports(self, temp_dir: Path, conflicting_cubes_file: Path) -> None:
        """Test that a failed solve exits 1 but writes its report."""
        assert run(["solve", str(conflicting_cubes_file), "-o", str(temp_dir)]) == 1
        report = json.loads((temp_dir / "conflict.solve.json").read_text(encoding="utf-8"))
        assert report["converged"] is False
        assert "InconsistentConstraints" in [d["code"] for d in report["diagnostics"]]

    def test_pin_out_of_limits(self, temp_dir: Path, scissors_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that an out-of-limit pin stops before solving."""
        assert run(["solve", str(scissors_file), "--pin", "hinge=90", "-o", str(temp_dir)]) == 1
        assert "LimitViolation" in capsys.readouterr().out
        assert not (temp_dir / "scissors.solve.json").exists()


class TestRenderCommands:
    """Tests for render, sweep, and ids."""

    def test_render_views(self, temp_dir: Path, scissors_file: Path) -> None:
        """Test one SVG per view plus the legend."""
        out = temp_dir / "renders"
        assert run(["render", str(scissors_file), "--views", "front,iso", "-o", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["legend.json", "scissors_front.svg", "scissors_iso.svg"]

    def test_render_failed_solve(self, temp_dir: Path, conflicting_cubes_file: Path) -> None:
        """Test that a failed solve still renders, with a banner, and exits 1."""
        assert run(["render", str(conflicting_cubes_file), "--views", "top", "-o", str(temp_dir)]) == 1
        assert 'id="failure-banner"' in (temp_dir / "conflict_top.svg").read_text(encoding="utf-8")

    def test_sweep(self, temp_dir: Path, scissors_file: Path) -> None:
        """Test the default four-angle sweep."""
        assert run(["sweep", str(scissors_file), "hinge", "-o", str(temp_dir)]) == 0
        frames = sorted(p.name for p in temp_dir.glob("scissors_hinge_*.svg"))
        assert frames == ["scissors_hinge_0.svg", "scissors_hinge_20.svg", "scissors_hinge_40.svg", "scissors_hinge_60.svg"]
        assert (temp_dir / "legend.json").is_file()

    def test_empty_sweep(self, temp_dir: Path, scissors_file: Path) -> None:
        """Test that no angles write nothing and succeed."""
        out = temp_dir / "empty"
        assert run(["sweep", str(scissors_file), "hinge", "--angles", "", "-o", str(out)]) == 0
        assert list(out.iterdir()) == []

    def test_sweep_out_of_limits(self, temp_dir: Path, scissors_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that a skipped frame fails the command but keeps the rest."""
        assert run(["sweep", str(scissors_file), "hinge", "--angles", "0,90", "-o", str(temp_dir)]) == 1
        assert (temp_dir / "scissors_hinge_0.svg").is_file()
        assert not (temp_dir / "scissors_hinge_90.svg").exists()
        assert "frame at 90 deg skipped" in capsys.readouterr().out

    def test_ids(self, temp_dir: Path, scissors_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the printed legend and legend.json."""
        assert run(["ids", str(scissors_file), "-o", str(temp_dir)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Pivot1 = link pivot\n")
        assert "red-solid: Pivot1 face PosX" in out
        legend = json.loads((temp_dir / "legend.json").read_text(encoding="utf-8"))
        assert len(legend) == 90


class TestExportCommand:
    """Tests for the export command."""

    def test_export_obj(self, temp_dir: Path, two_cubes_file: Path) -> None:
        """Test writing an OBJ mesh."""
        assert run(["export", str(two_cubes_file), "--format", "obj", "-o", str(temp_dir)]) == 0
        assert "o top" in (temp_dir / "two_cubes.obj").read_text(encoding="utf-8").splitlines()

    def test_export_stl_default(self, temp_dir: Path, two_cubes_file: Path) -> None:
        """Test that STL is the default format."""
        assert run(["export", str(two_cubes_file), "-o", str(temp_dir)]) == 0
        assert (temp_dir / "two_cubes.stl").read_text(encoding="utf-8").startswith("solid base")


class TestAgentCommand:
    """Tests for the agent command."""

    @pytest.fixture
    def task_file(self, temp_dir: Path) -> Path:
        """A description-only task file."""
        path = temp_dir / "task.json"
        path.write_text(json.dumps({"description": "a pair of scissors", "budget": {"iterations": 5}}), encoding="utf-8")
        return path

    def test_replay_with_zero_budget(self, temp_dir: Path, task_file: Path) -> None:
        """Test that a zero budget ends the session as BudgetExhausted."""
        transcript = temp_dir / "recorded.jsonl"
        transcript.write_text("", encoding="utf-8")
        session = temp_dir / "session"
        code = run(["agent", str(task_file), "--replay", str(transcript), "--budget", "0", "-o", str(session)])
        assert code == 1
        assert json.loads((session / "telemetry.json").read_text(encoding="utf-8"))["outcome"] == "BudgetExhausted"

    def test_missing_endpoint(self, temp_dir: Path, task_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that an unconfigured model is a usage error."""
        with patch.object(HttpChatClient, "from_env", side_effect=ClientError("Set MATEFORGE_API_ENDPOINT")):
            assert run(["agent", str(task_file), "-o", str(temp_dir / "session")]) == 2
        assert "MATEFORGE_API_ENDPOINT" in capsys.readouterr().out

    def test_invalid_task_file(self, temp_dir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test that a task without images or description is rejected."""
        path = temp_dir / "task.json"
        path.write_text("{}", encoding="utf-8")
        assert run(["agent", str(path), "-o", str(temp_dir / "session")]) == 2
        assert "Invalid task file" in capsys.readouterr().out

    def test_non_empty_directory_needs_overwrite(
        self,
        temp_dir: Path,
        task_file: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        """Test that a directory with other files is only reused with --overwrite, and keeps them."""
        transcript = temp_dir / "recorded.jsonl"
        transcript.write_text("", encoding="utf-8")
        session = temp_dir / "project"
        session.mkdir()
        user_file = session / "chair.asm.json"
        user_file.write_text("{}", encoding="utf-8")

        command = ["agent", str(task_file), "--replay", str(transcript), "--budget", "0", "-o", str(session)]
        assert run(command) == 2
        assert "--overwrite" in capsys.readouterr().out
        assert not (session / "telemetry.json").exists()

        assert run([*command, "--overwrite"]) == 1
        assert (session / "telemetry.json").is_file()
        assert user_file.read_text(encoding="utf-8") == "{}"

    def test_default_session_directory(self, temp_dir: Path, task_file: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that without --out a fresh <task>-session directory is used."""
        transcript = temp_dir / "recorded.jsonl"
        transcript.write_text("", encoding="utf-8")
        monkeypatch.chdir(temp_dir)
        assert run(["agent", str(task_file), "--replay", str(transcript), "--budget", "0"]) == 1
        assert (temp_dir / "task-session" / "telemetry.json").is_file()
        assert session_directory(Path("jobs/chair.json"), None) == Path.cwd() / "chair-session"
        assert session_directory(Path("jobs/chair.json"), Path("out")) == Path("out")
