"""Tests for edge cases and error handling in mateforge."""

import copy
import json
import math
from typing import Any

import numpy as np
import pytest

from mateforge.compiler import compile_assembly
from mateforge.diagnostics import DiagnosticCode, error, round_number, to_json_lines, warning
from mateforge.ir import AssemblyDef, Link, Part, parse_assembly
from mateforge.kinematics import Pose
from mateforge.render import ViewSpec, render_view
from mateforge.solver import build_constraints, solve
from mateforge.visual import assign_visual_ids
from tests.conftest import FIXTURES, SCISSORS, assembly_text

REPLACEMENTS: list[Any] = [None, 0, -1, 1e6, "", "PosQ", [], {}, [1], [0, 0, 0], True, "revolute"]


def mutate(document: dict[str, Any], rng: np.random.Generator) -> dict[str, Any]:
    """Replace or delete one randomly chosen value somewhere in the document."""
    mutated = copy.deepcopy(document)
    node: Any = mutated
    while True:
        keys = list(node) if isinstance(node, dict) else list(range(len(node)))
        if not keys:
            return mutated
        key = keys[int(rng.integers(len(keys)))]
        child = node[key]
        if isinstance(child, (dict, list)) and child and rng.random() < 0.6:
            node = child
            continue
        if isinstance(node, dict) and rng.random() < 0.3:
            del node[key]
        else:
            node[key] = REPLACEMENTS[int(rng.integers(len(REPLACEMENTS)))]
        return mutated


def mutate_bytes(data: bytes, rng: np.random.Generator) -> bytes:
    """Flip, insert, or delete a few random bytes."""
    buffer = bytearray(data)
    for _ in range(int(rng.integers(1, 5))):
        position = int(rng.integers(len(buffer) + 1))
        match int(rng.integers(3)):
            case 0 if position < len(buffer):
                buffer[position] = int(rng.integers(256))
            case 1:
                buffer.insert(position, int(rng.integers(256)))
            case _ if position < len(buffer):
                del buffer[position]
    return bytes(buffer)


def check_total(text: str | bytes) -> None:
    """Parse, and when that succeeds compile; neither may raise."""
    result = parse_assembly(text)
    if isinstance(result, AssemblyDef):
        compiled = compile_assembly(result)
        to_json_lines(compiled.diagnostics)
    else:
        assert result
        to_json_lines(result)


class TestParserTotality:
    """Tests that malformed input becomes diagnostics, never exceptions."""

    def test_random_bytes(self) -> None:
        """Test 200 random byte strings."""
        rng = np.random.default_rng(3)
        for _ in range(200):
            size = int(rng.integers(0, 64))
            check_total(rng.integers(0, 256, size=size, dtype=np.uint8).tobytes())

    def test_mutated_documents(self) -> None:
        """Test 200 single-value mutations of a valid assembly."""
        rng = np.random.default_rng(11)
        for _ in range(200):
            check_total(assembly_text(mutate(SCISSORS, rng)))

    @pytest.mark.parametrize("name", ["two_cubes.asm.json", "scissors.asm.json"])
    def test_mutated_golden_bytes(self, name: str) -> None:
        """Test 300 byte-level mutations of a committed assembly file."""
        golden = (FIXTURES / name).read_bytes()
        rng = np.random.default_rng(len(golden))
        for _ in range(300):
            check_total(mutate_bytes(golden, rng))

    @pytest.mark.slow
    def test_many_mutations(self) -> None:
        """Test stacked mutations at larger volume."""
        rng = np.random.default_rng(12)
        for _ in range(2000):
            document = SCISSORS
            for _ in range(int(rng.integers(1, 4))):
                document = mutate(document, rng)
            check_total(assembly_text(document))
        golden = (FIXTURES / "scissors.asm.json").read_bytes()
        for _ in range(2000):
            check_total(mutate_bytes(golden, rng))

    def test_non_finite_dims(self) -> None:
        """Test that NaN and infinite dimensions are rejected."""
        for dims in ("[NaN, 1, 1]", "[Infinity, 1, 1]", "[1, 1, -Infinity]"):
            text = '{"parts": [{"name": "p", "shape": "box", "dims": %s}], "links": [{"name": "a", "part": "p", "grounded": true}], "joints": []}' % dims  # noqa: UP031
            result = parse_assembly(text)
            assert isinstance(result, list), dims


class TestDiagnosticsOutput:
    """Tests for diagnostic serialization."""

    def test_round_number(self) -> None:
        """Test stable rounding for text output."""
        assert round_number(3.0) == 3
        assert isinstance(round_number(3.0), int)
        assert round_number(-0.0) == 0
        assert round_number(-1e-12) == 0
        assert round_number(0.1 + 0.2) == 0.3
        assert round_number(2.5e-7, 6) == 0

    def test_json_line(self) -> None:
        """Test the compact, fixed-order JSON form with numpy data."""
        diagnostic = error(
            DiagnosticCode.INTERSECTION,
            "links a and b overlap",
            ["a", "b"],
            depth=np.float64(0.5),
            axis=np.array([1.0, 0.0, -0.0]),
        )
        line = diagnostic.to_json_line()
        assert "\n" not in line
        assert line.startswith('{"code":"Intersection","severity":"Error","message":')
        assert json.loads(line)["data"] == {"depth": 0.5, "axis": [1, 0, 0]}

    def test_json_lines(self) -> None:
        """Test one line per diagnostic, and nothing for none."""
        assert to_json_lines([]) == ""
        lines = to_json_lines([warning(DiagnosticCode.STYLE_CAPACITY, "x"), error(DiagnosticCode.PARSE_ERROR, "y")])
        assert [json.loads(line)["severity"] for line in lines.splitlines()] == ["Warning", "Error"]


class TestGeometryBoundaries:
    """Tests for degenerate but legal geometry."""

    def test_thin_plate(self) -> None:
        """Test a plate a hundredth of a millimeter thick."""
        document = {
            "parts": [{"name": "plate", "shape": "box", "dims": [50, 50, 0.01]}],
            "links": [{"name": "a", "part": "plate", "grounded": True}, {"name": "b", "part": "plate"}],
            "joints": [{"name": "stack", "kind": "fixed", "a": {"link": "a", "face": "PosZ"}, "b": {"link": "b", "face": "NegZ"}}],
        }
        definition = parse_assembly(assembly_text(document))
        assert isinstance(definition, AssemblyDef)
        result = compile_assembly(definition)
        assert result.ok
        assert result.poses["b"].position[2] == pytest.approx(0.01)

    def test_offset_outside_face(self) -> None:
        """Test that an offset beyond the face still solves, leaving the boxes apart."""
        document = {
            "parts": [{"name": "cube", "shape": "box", "dims": [10, 10, 10]}],
            "links": [{"name": "a", "part": "cube", "grounded": True}, {"name": "b", "part": "cube"}],
            "joints": [
                {
                    "name": "far",
                    "kind": "fixed",
                    "a": {"link": "a", "face": "PosZ"},
                    "b": {"link": "b", "face": "NegZ"},
                    "offset": [100, 0],
                },
            ],
        }
        definition = parse_assembly(assembly_text(document))
        assert isinstance(definition, AssemblyDef)
        result = compile_assembly(definition)
        assert result.ok
        assert result.poses["b"].position == pytest.approx((100.0, 0.0, 10.0))

    def test_grounded_only(self) -> None:
        """Test an assembly with nothing to solve."""
        definition = AssemblyDef((Part("cube", (1.0, 1.0, 1.0)),), (Link("cube", "cube", grounded=True),), ())
        outcome = solve(build_constraints(definition))
        assert outcome.converged
        assert outcome.iterations == 0
        assert outcome.dof == 0

    def test_render_far_from_origin(self) -> None:
        """Test that huge coordinates still fit the viewport."""
        definition = AssemblyDef((Part("cube", (1.0, 1.0, 1.0)),), (Link("cube", "cube", grounded=True),), ())
        document = render_view(definition, {"cube": Pose((1e6, -1e6, 5e5))}, assign_visual_ids(definition), ViewSpec())
        assert "nan" not in document.lower()
        assert document.count("<polygon id=") == 3

    def test_turned_grounded_link(self) -> None:
        """Test that a grounded placement angle carries through to the mate."""
        document = {
            "parts": [{"name": "bar", "shape": "box", "dims": [40, 10, 10]}],
            "links": [
                {"name": "a", "part": "bar", "grounded": True, "placement": {"position": [0, 0, 0], "axis": [0, 0, 1], "angle": 90}},
                {"name": "b", "part": "bar"},
            ],
            "joints": [{"name": "end", "kind": "fixed", "a": {"link": "a", "face": "PosX"}, "b": {"link": "b", "face": "NegX"}}],
        }
        definition = parse_assembly(assembly_text(document))
        assert isinstance(definition, AssemblyDef)
        result = compile_assembly(definition)
        assert result.ok
        x, y, _ = result.poses["b"].position
        assert (x, y) == pytest.approx((0.0, 40.0), abs=1e-9)
        assert math.isclose(abs(result.poses["b"].orientation.w), math.cos(math.pi / 4), abs_tol=1e-9)
