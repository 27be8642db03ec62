"""Shared fixtures and assembly documents for mateforge tests."""

import json
import tempfile
from pathlib import Path
from typing import Any, Generator

import pytest

from mateforge.ir import AssemblyDef, parse_assembly

FIXTURES = Path(__file__).parent / "fixtures"

# Pivot rivet (grounded) between two blades; each blade carries a handle. The blade2 joint
# is the only revolute. pivot_handle1 restates what pivot_blade1 + blade1_handle1 already
# imply, so the assembly is redundant but consistent.
SCISSORS: dict[str, Any] = {
    "parts": [
        {"name": "pivot", "shape": "box", "dims": [6, 6, 2]},
        {"name": "blade", "shape": "box", "dims": [140, 12, 2]},
        {"name": "handle", "shape": "box", "dims": [40, 20, 2]},
    ],
    "links": [
        {"name": "pivot", "part": "pivot", "grounded": True},
        {"name": "blade1", "part": "blade"},
        {"name": "blade2", "part": "blade"},
        {"name": "handle1", "part": "handle"},
        {"name": "handle2", "part": "handle"},
    ],
    "joints": [
        {
            "name": "pivot_blade1",
            "kind": "fixed",
            "a": {"link": "pivot", "face": "NegZ"},
            "b": {"link": "blade1", "face": "PosZ"},
            "offset": [30, 0],
        },
        {
            "name": "hinge",
            "kind": "revolute",
            "a": {"link": "pivot", "face": "PosZ"},
            "b": {"link": "blade2", "face": "NegZ"},
            "offset": [30, 0],
            "limits": [0, 60],
        },
        {
            "name": "blade1_handle1",
            "kind": "fixed",
            "a": {"link": "blade1", "face": "NegX"},
            "b": {"link": "handle1", "face": "PosX"},
        },
        {
            "name": "blade2_handle2",
            "kind": "fixed",
            "a": {"link": "blade2", "face": "NegX"},
            "b": {"link": "handle2", "face": "PosX"},
        },
        {
            "name": "pivot_handle1",
            "kind": "fixed",
            "a": {"link": "pivot", "face": "NegZ"},
            "b": {"link": "handle1", "face": "PosZ"},
            "offset": [-60, 0],
        },
    ],
}

# 30 mm cube on a grounded 30 mm cube: closed-form top center is (0, 0, 30).
TWO_CUBES: dict[str, Any] = {
    "parts": [{"name": "cube", "shape": "box", "dims": [30, 30, 30]}],
    "links": [
        {"name": "base", "part": "cube", "grounded": True},
        {"name": "top", "part": "cube"},
    ],
    "joints": [
        {
            "name": "stack",
            "kind": "fixed",
            "a": {"link": "base", "face": "PosZ"},
            "b": {"link": "top", "face": "NegZ"},
        },
    ],
}

# Same cubes, but a second fixed joint wants the top cube 10 mm further along x.
CONFLICTING_CUBES: dict[str, Any] = {
    **TWO_CUBES,
    "joints": [
        *TWO_CUBES["joints"],
        {
            "name": "shifted",
            "kind": "fixed",
            "a": {"link": "base", "face": "PosZ"},
            "b": {"link": "top", "face": "NegZ"},
            "offset": [10, 0],
        },
    ],
}

# Three arms stacked on a grounded base, each on its own revolute.
CHAIN: dict[str, Any] = {
    "parts": [
        {"name": "base", "shape": "box", "dims": [60, 20, 4]},
        {"name": "arm", "shape": "box", "dims": [60, 10, 4]},
    ],
    "links": [
        {"name": "base", "part": "base", "grounded": True},
        {"name": "arm1", "part": "arm"},
        {"name": "arm2", "part": "arm"},
        {"name": "arm3", "part": "arm"},
    ],
    "joints": [
        {
            "name": f"joint{i}",
            "kind": "revolute",
            "a": {"link": parent, "face": "PosZ"},
            "b": {"link": f"arm{i}", "face": "NegZ"},
            "offset": [20, 0],
        }
        for i, parent in ((1, "base"), (2, "arm1"), (3, "arm2"))
    ],
}

# All-fixed furniture: four legs under a grounded top.
TABLE: dict[str, Any] = {
    "parts": [
        {"name": "top", "shape": "box", "dims": [100, 60, 4]},
        {"name": "leg", "shape": "box", "dims": [4, 4, 40]},
    ],
    "links": [
        {"name": "top", "part": "top", "grounded": True},
        *({"name": f"leg{i}", "part": "leg"} for i in range(1, 5)),
    ],
    "joints": [
        {
            "name": f"mount{i}",
            "kind": "fixed",
            "a": {"link": "top", "face": "NegZ"},
            "b": {"link": f"leg{i}", "face": "PosZ"},
            "offset": list(offset),
        }
        for i, offset in enumerate(((45, 25), (-45, 25), (-45, -25), (45, -25)), 1)
    ],
}


def assembly_text(document: dict[str, Any]) -> str:
    """Serialize an assembly document the way an author would write it."""
    return json.dumps(document, indent=2)


def parsed(document: dict[str, Any]) -> AssemblyDef:
    """Parse a document that is known to be valid."""
    result = parse_assembly(assembly_text(document))
    assert isinstance(result, AssemblyDef), result
    return result


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for testing."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def scissors() -> AssemblyDef:
    """The five-link scissors assembly."""
    return parsed(SCISSORS)


@pytest.fixture
def two_cubes() -> AssemblyDef:
    """Two face-mated cubes."""
    return parsed(TWO_CUBES)


@pytest.fixture
def conflicting_cubes() -> AssemblyDef:
    """Two cubes joined by two contradicting fixed joints."""
    return parsed(CONFLICTING_CUBES)


@pytest.fixture
def chain() -> AssemblyDef:
    """Serial chain of three revolute arms."""
    return parsed(CHAIN)


@pytest.fixture
def table() -> AssemblyDef:
    """A table top with four fixed legs."""
    return parsed(TABLE)


@pytest.fixture
def scissors_file(temp_dir: Path) -> Path:
    """Scissors assembly written to disk."""
    path = temp_dir / "scissors.asm.json"
    path.write_text(assembly_text(SCISSORS))
    return path


@pytest.fixture
def two_cubes_file(temp_dir: Path) -> Path:
    """Two-cube assembly written to disk."""
    path = temp_dir / "two_cubes.asm.json"
    path.write_text(assembly_text(TWO_CUBES))
    return path


@pytest.fixture
def conflicting_cubes_file(temp_dir: Path) -> Path:
    """Conflicting two-cube assembly written to disk."""
    path = temp_dir / "conflict.asm.json"
    path.write_text(assembly_text(CONFLICTING_CUBES))
    return path
