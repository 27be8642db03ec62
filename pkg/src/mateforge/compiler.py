"""The verification pipeline: validate, build, pin, solve, check intersections."""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

from mateforge.collision import check_intersections
from mateforge.diagnostics import AssemblyError, Diagnostic, has_errors
from mateforge.ir import AssemblyDef, load_assembly, validate_assembly
from mateforge.kinematics import Pose
from mateforge.solver import ConstraintSystem, SolveOutcome, build_constraints, pin_joint, solve
from mateforge.visual import VisualMap, assign_visual_ids

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompileResult:
    """Everything one pass of the pipeline learned about an assembly."""

    definition: AssemblyDef | None
    diagnostics: tuple[Diagnostic, ...]
    system: ConstraintSystem | None = None
    outcome: SolveOutcome | None = None
    visual_map: VisualMap | None = None

    @property
    def ok(self) -> bool:
        """Solved, converged, and free of Error diagnostics."""
        return self.outcome is not None and self.outcome.converged and not has_errors(self.diagnostics)

    @property
    def poses(self) -> Mapping[str, Pose]:
        """Best-effort poses, empty when the pipeline stopped before solving."""
        return self.outcome.poses if self.outcome is not None else {}


def compile_assembly(
    definition: AssemblyDef,
    pins: Mapping[str, float] | None = None,
    initial: Mapping[str, Pose] | None = None,
) -> CompileResult:
    """
    Run the full pipeline on a parsed assembly.

    Args:
        definition: Parsed assembly
        pins: Revolute joint angles to hold fixed, in degrees
        initial: Optional starting poses for the solver

    Returns:
        Diagnostics in validation, solver, geometry order. Validation or pin errors stop the
        pipeline before solving; solver failures still produce best-effort poses.

    """
    diagnostics = validate_assembly(definition)
    if has_errors(diagnostics):
        logger.info("Validation failed with %d diagnostic(s)", len(diagnostics))
        return CompileResult(definition, tuple(diagnostics))

    visual_map = assign_visual_ids(definition)
    system = build_constraints(definition)
    for joint, degrees in (pins or {}).items():
        try:
            system = pin_joint(system, joint, math.radians(degrees))
        except AssemblyError as e:
            diagnostics.append(e.diagnostic)
    if has_errors(diagnostics):
        return CompileResult(definition, tuple(diagnostics), system, visual_map=visual_map)

    outcome = solve(system, initial)
    diagnostics.extend(outcome.diagnostics)
    diagnostics.extend(check_intersections(definition, outcome.poses))
    diagnostics.extend(visual_map.diagnostics)
    return CompileResult(definition, tuple(diagnostics), system, outcome, visual_map)


def compile_file(path: Path, pins: Mapping[str, float] | None = None) -> CompileResult:
    """Load an assembly file and compile it; parse problems become the result's diagnostics."""
    loaded = load_assembly(path)
    if isinstance(loaded, list):
        return CompileResult(None, tuple(loaded))
    return compile_assembly(loaded, pins)
