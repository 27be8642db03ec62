"""
Constraint solver for face-mated box assemblies.

Every free link contributes seven unknowns (position, then quaternion w, x, y, z).
Grounded links are constants. Joint rows come first, in assembly order, followed by one
unit-norm row per free link. The solve is a damped Newton (Levenberg) iteration with a
fixed damping schedule and a central-difference Jacobian, so identical inputs always
produce bit-identical results.
"""

import json
import logging
import math
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np

from mateforge.diagnostics import (
    AssemblyError,
    Diagnostic,
    DiagnosticCode,
    error,
    round_number,
    warning,
)
from mateforge.ir import AssemblyDef, Joint, JointKind
from mateforge.kinematics import (
    IDENTITY,
    Pose,
    Quaternion,
    face_frame,
    face_rotation,
    quat_canonical,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)

logger = logging.getLogger(__name__)

COORDS_PER_LINK = 7
TOLERANCE = 1e-9
MAX_ITERATIONS = 200
FD_STEP = 1e-6
LAMBDA_START = 1e-3
LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e4
LAMBDA_DECREASE = 0.5
LAMBDA_INCREASE = 4.0
INCONSISTENCY_THRESHOLD = 1e-6
RANK_TOLERANCE = 1e-6
LIMIT_SLACK_DEGREES = 1e-6

# Half-turn about tangent_u: mated faces have anti-parallel normals.
FLIP = Quaternion(0.0, 1.0, 0.0, 0.0)


class EquationTag(StrEnum):
    """What a block of residual rows measures."""

    COINCIDENCE = "coincidence"
    ORIENTATION = "orientation"
    AXIS = "axis"
    PIN = "pin"
    NORM = "norm"


ROWS = {
    EquationTag.COINCIDENCE: 3,
    EquationTag.ORIENTATION: 3,
    EquationTag.AXIS: 2,
    EquationTag.PIN: 1,
    EquationTag.NORM: 1,
}


@dataclass(frozen=True)
class Equation:
    """A block of residual rows produced by one joint (or one link's norm constraint)."""

    source: str
    tag: EquationTag

    @property
    def size(self) -> int:
        """Number of scalar rows."""
        return ROWS[self.tag]


@dataclass(frozen=True)
class ConstraintSystem:
    """Unknowns and equations compiled from an assembly. Immutable."""

    definition: AssemblyDef
    links: tuple[str, ...]
    grounded: Mapping[str, Pose]
    equations: tuple[Equation, ...]
    pinned_angles: Mapping[str, float] = field(default_factory=dict)

    @property
    def unknown_count(self) -> int:
        """Length of the state vector."""
        return COORDS_PER_LINK * len(self.links)

    @property
    def equation_count(self) -> int:
        """Total scalar rows."""
        return sum(eq.size for eq in self.equations)

    @property
    def joint_equation_count(self) -> int:
        """Scalar rows contributed by joints (and pins), excluding norm rows."""
        return sum(eq.size for eq in self.equations if eq.tag is not EquationTag.NORM)

    def row_sources(self) -> list[str]:
        """Source name of every scalar row, in order."""
        return [eq.source for eq in self.equations for _ in range(eq.size)]


@dataclass(frozen=True)
class SolveOutcome:
    """Best-effort solve result; poses cover every link even on failure."""

    poses: Mapping[str, Pose]
    converged: bool
    residual_norm: float
    iterations: int
    dof: int
    diagnostics: tuple[Diagnostic, ...] = ()
    joint_angles: Mapping[str, float] = field(default_factory=dict)


def _equations(definition: AssemblyDef, links: tuple[str, ...], pinned: Mapping[str, float]) -> tuple[Equation, ...]:
    equations = []
    for joint in definition.joints:
        equations.append(Equation(joint.name, EquationTag.COINCIDENCE))
        if joint.kind is JointKind.FIXED:
            equations.append(Equation(joint.name, EquationTag.ORIENTATION))
        else:
            equations.append(Equation(joint.name, EquationTag.AXIS))
            if joint.name in pinned:
                equations.append(Equation(joint.name, EquationTag.PIN))
    equations.extend(Equation(link, EquationTag.NORM) for link in links)
    return tuple(equations)


def build_constraints(definition: AssemblyDef) -> ConstraintSystem:
    """Compile a validated assembly into unknowns and residual equations."""
    free = tuple(link.name for link in definition.links if not link.grounded)
    grounded = {link.name: link.placement.pose for link in definition.links if link.grounded}
    system = ConstraintSystem(definition, free, grounded, _equations(definition, free, {}))
    logger.debug(
        "Built system: %d unknowns, %d equations (%d joint rows)",
        system.unknown_count,
        system.equation_count,
        system.joint_equation_count,
    )
    return system


def pin_joint(system: ConstraintSystem, joint: str, angle: float) -> ConstraintSystem:
    """
    Fix a revolute joint's rotation to ``angle`` radians.

    Returns:
        A new system with one extra row; the input system is unchanged.

    Raises:
        AssemblyError: If the joint is unknown, not revolute, or the angle is outside its limits

    """
    try:
        target = system.definition.joint(joint)
    except KeyError:
        raise AssemblyError(
            error(DiagnosticCode.UNRESOLVED_REFERENCE, f"cannot pin unknown joint {joint!r}", [joint]),
        ) from None
    if target.kind is not JointKind.REVOLUTE:
        raise AssemblyError(
            error(
                DiagnosticCode.INVALID_JOINT,
                f"cannot pin joint {joint!r}: it is {target.kind}, only revolute joints rotate",
                [joint],
            ),
        )
    degrees = math.degrees(angle)
    if target.angle_limits is not None:
        lo, hi = target.angle_limits
        if not (lo - LIMIT_SLACK_DEGREES <= degrees <= hi + LIMIT_SLACK_DEGREES):
            raise AssemblyError(
                error(
                    DiagnosticCode.LIMIT_VIOLATION,
                    f"joint {joint!r} angle {degrees:g} deg is outside its limits [{lo:g}, {hi:g}]",
                    [joint],
                    angle=degrees,
                    lo=lo,
                    hi=hi,
                ),
            )
    pinned = {**system.pinned_angles, joint: angle}
    return replace(
        system,
        pinned_angles=pinned,
        equations=_equations(system.definition, system.links, pinned),
    )


# Geometry shared by residuals and placement


@dataclass(frozen=True)
class _JointGeometry:
    anchor_a: np.ndarray  # a's face center, part-local
    anchor_b: np.ndarray  # b's matching material point, part-local
    face_a: Quaternion
    face_b: Quaternion


def _joint_geometry(definition: AssemblyDef, joint: Joint) -> _JointGeometry:
    frame_a = face_frame(definition.part_of(joint.a.link), joint.a.face)
    frame_b = face_frame(definition.part_of(joint.b.link), joint.b.face)
    ou, ov = joint.offset
    # b's face center sits at ou*u + ov*v in a's (rotating) face frame; u_b = u, v_b = -v.
    anchor_b = (
        np.asarray(frame_b.origin)
        - ou * np.asarray(frame_b.tangent_u)
        + ov * np.asarray(frame_b.tangent_v)
    )
    return _JointGeometry(
        np.asarray(frame_a.origin),
        anchor_b,
        face_rotation(joint.a.face),
        face_rotation(joint.b.face),
    )


def _rz(angle: float) -> Quaternion:
    return Quaternion(math.cos(0.5 * angle), 0.0, 0.0, math.sin(0.5 * angle))


def relative_rotation(geometry: _JointGeometry, qa: Quaternion, qb: Quaternion) -> Quaternion:
    """Rotation carrying a's flipped face frame onto b's face frame (pure Rz when mated)."""
    target = quat_multiply(qa, geometry.face_a)
    actual = quat_multiply(quat_multiply(qb, geometry.face_b), quat_conjugate(FLIP))
    return quat_multiply(quat_conjugate(target), actual)


def _wrap(angle: float) -> float:
    wrapped = math.remainder(angle, 2 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def _hinge_angle(rel: Quaternion) -> float:
    return _wrap(2.0 * math.atan2(rel.z, rel.w))


def _place_b(geometry: _JointGeometry, pose_a: Pose, angle: float) -> Pose:
    qa = pose_a.orientation
    frame = quat_multiply(quat_multiply(qa, geometry.face_a), quat_multiply(_rz(angle), FLIP))
    qb = quat_normalize(quat_multiply(frame, quat_conjugate(geometry.face_b)))
    anchor = np.asarray(pose_a.position) + quat_to_matrix(qa) @ geometry.anchor_a
    position = anchor - quat_to_matrix(qb) @ geometry.anchor_b
    return Pose(_as_vec(position), qb)


def _place_a(geometry: _JointGeometry, pose_b: Pose, angle: float) -> Pose:
    qb = pose_b.orientation
    frame = quat_multiply(quat_multiply(qb, geometry.face_b), quat_conjugate(quat_multiply(_rz(angle), FLIP)))
    qa = quat_normalize(quat_multiply(frame, quat_conjugate(geometry.face_a)))
    anchor = np.asarray(pose_b.position) + quat_to_matrix(qb) @ geometry.anchor_b
    position = anchor - quat_to_matrix(qa) @ geometry.anchor_a
    return Pose(_as_vec(position), qa)


def _as_vec(values: np.ndarray) -> tuple[float, float, float]:
    return (float(values[0]), float(values[1]), float(values[2]))


def _start_angle(joint: Joint, pinned: Mapping[str, float]) -> float:
    if joint.name in pinned:
        return pinned[joint.name]
    if joint.kind is JointKind.REVOLUTE and joint.angle_limits is not None:
        lo, hi = joint.angle_limits
        return math.radians(min(max(0.0, lo), hi))
    return 0.0


def initial_poses(system: ConstraintSystem) -> dict[str, Pose]:
    """Breadth-first placement outward from grounded links; unreached links start at identity."""
    definition = system.definition
    poses: dict[str, Pose] = dict(system.grounded)
    queue = deque(link.name for link in definition.links if link.grounded)
    while queue:
        current = queue.popleft()
        for joint in definition.joints:
            a, b = joint.links
            if current not in (a, b) or (a in poses and b in poses):
                continue
            geometry = _joint_geometry(definition, joint)
            angle = _start_angle(joint, system.pinned_angles)
            if a == current:
                poses[b] = _place_b(geometry, poses[a], angle)
                queue.append(b)
            else:
                poses[a] = _place_a(geometry, poses[b], angle)
                queue.append(a)
    return {link.name: poses.get(link.name, Pose()) for link in definition.links}


# State vectors


def pack_state(system: ConstraintSystem, poses: Mapping[str, Pose]) -> np.ndarray:
    """Flatten free-link poses into a state vector."""
    state = np.zeros(system.unknown_count)
    for index, name in enumerate(system.links):
        pose = poses[name]
        base = COORDS_PER_LINK * index
        state[base : base + 3] = pose.position
        state[base + 3 : base + 7] = pose.orientation.as_tuple()
    return state


def _raw_poses(system: ConstraintSystem, state: np.ndarray) -> dict[str, tuple[np.ndarray, Quaternion]]:
    poses = {name: (np.asarray(pose.position, dtype=float), pose.orientation) for name, pose in system.grounded.items()}
    for index, name in enumerate(system.links):
        base = COORDS_PER_LINK * index
        w, x, y, z = state[base + 3 : base + 7]
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        q = IDENTITY if norm < 1e-12 else Quaternion(w / norm, x / norm, y / norm, z / norm)  # noqa: PLR2004
        poses[name] = (state[base : base + 3], q)
    return poses


def unpack_state(system: ConstraintSystem, state: np.ndarray) -> dict[str, Pose]:
    """Poses for every link, quaternions normalized and canonical."""
    raw = _raw_poses(system, state)
    poses = {}
    for link in system.definition.links:
        position, q = raw[link.name]
        poses[link.name] = Pose(_as_vec(position), quat_canonical(q))
    return poses


def _renormalize(system: ConstraintSystem, state: np.ndarray) -> np.ndarray:
    result = state.copy()
    for index in range(len(system.links)):
        base = COORDS_PER_LINK * index
        w, x, y, z = result[base + 3 : base + 7]
        try:
            q = quat_normalize(Quaternion(w, x, y, z))
        except ValueError:
            q = IDENTITY
        result[base + 3 : base + 7] = q.as_tuple()
    return result


# Residual and Jacobian


def _joint_rows(
    joint: Joint,
    geometry: _JointGeometry,
    pose_a: tuple[np.ndarray, Quaternion],
    pose_b: tuple[np.ndarray, Quaternion],
    pinned: Mapping[str, float],
) -> list[float]:
    pa, qa = pose_a
    pb, qb = pose_b
    anchor_a = pa + quat_to_matrix(qa) @ geometry.anchor_a
    anchor_b = pb + quat_to_matrix(qb) @ geometry.anchor_b
    rows = [float(v) for v in anchor_b - anchor_a]
    rel = relative_rotation(geometry, qa, qb)
    if joint.kind is JointKind.FIXED:
        sign = 1.0 if rel.w >= 0 else -1.0
        rows.extend((2.0 * sign * rel.x, 2.0 * sign * rel.y, 2.0 * sign * rel.z))
    else:
        rows.extend((2.0 * rel.x, 2.0 * rel.y))
        if joint.name in pinned:
            half = 0.5 * pinned[joint.name]
            rows.append(2.0 * (rel.z * math.cos(half) - rel.w * math.sin(half)))
    return rows


def residual(system: ConstraintSystem, state: np.ndarray) -> np.ndarray:
    """
    Residual vector; zero iff every mate is satisfied and every quaternion is unit.

    Coincidence rows are world-space differences between the mated anchor points (mm).
    Orientation rows are twice the vector part of the relative-rotation error. Revolute
    axis rows are the two tangential components of that error, which leave rotation about
    the shared normal free.
    """
    poses = _raw_poses(system, state)
    definition = system.definition
    rows: list[float] = []
    for joint in definition.joints:
        geometry = _joint_geometry(definition, joint)
        rows.extend(_joint_rows(joint, geometry, poses[joint.a.link], poses[joint.b.link], system.pinned_angles))
    for index in range(len(system.links)):
        q = state[COORDS_PER_LINK * index + 3 : COORDS_PER_LINK * index + 7]
        rows.append(float(q @ q) - 1.0)
    return np.asarray(rows, dtype=float)


def jacobian(system: ConstraintSystem, state: np.ndarray) -> np.ndarray:
    """Central finite differences with fixed step, columns in state order."""
    columns = []
    for k in range(state.size):
        forward = state.copy()
        backward = state.copy()
        forward[k] += FD_STEP
        backward[k] -= FD_STEP
        columns.append((residual(system, forward) - residual(system, backward)) / (2.0 * FD_STEP))
    if not columns:
        return np.zeros((system.equation_count, 0))
    return np.column_stack(columns)


def matrix_rank(matrix: np.ndarray) -> int:
    """Numerical rank with a tolerance relative to the largest singular value."""
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(singular > RANK_TOLERANCE * max(1.0, float(singular[0]))))


def _block_norms(system: ConstraintSystem, r: np.ndarray) -> dict[str, float]:
    norms: dict[str, float] = {}
    row = 0
    for eq in system.equations:
        if eq.tag is not EquationTag.NORM:
            block = r[row : row + eq.size]
            norms[eq.source] = math.hypot(norms.get(eq.source, 0.0), float(np.linalg.norm(block)))
        row += eq.size
    return norms


# Analysis


def dof_analysis(system: ConstraintSystem, state: np.ndarray) -> tuple[int, list[Diagnostic]]:
    """
    Estimate remaining mobility and report redundant joints.

    Returns:
        (6 per free link minus the rank of the joint rows, redundancy warnings)

    """
    joint_rows = system.joint_equation_count
    full = jacobian(system, state)[:joint_rows]
    rank = matrix_rank(full)
    dof = 6 * len(system.links) - rank
    diagnostics: list[Diagnostic] = []

    r = residual(system, state)[:joint_rows]
    if rank < joint_rows and float(np.linalg.norm(r)) <= INCONSISTENCY_THRESHOLD:
        sources = system.row_sources()[:joint_rows]
        involved = []
        for joint in system.definition.joints:
            keep = [i for i, source in enumerate(sources) if source != joint.name]
            own = joint_rows - len(keep)
            if rank - matrix_rank(full[keep]) < own:
                involved.append(joint.name)
        diagnostics.append(
            warning(
                DiagnosticCode.REDUNDANT_CONSTRAINTS,
                f"{joint_rows - rank} constraint equation(s) are redundant among joints "
                f"{', '.join(involved)}; they agree now but over-constrain the assembly",
                involved,
                redundant=joint_rows - rank,
            ),
        )
    logger.debug("DOF analysis: rank %d of %d joint rows, dof %d", rank, joint_rows, dof)
    return dof, diagnostics


def measure_joint_angle(definition: AssemblyDef, poses: Mapping[str, Pose], joint_name: str) -> float:
    """Signed angle (radians) from a's tangent_u to b's tangent_u about a's face normal."""
    joint = definition.joint(joint_name)
    geometry = _joint_geometry(definition, joint)
    rel = relative_rotation(geometry, poses[joint.a.link].orientation, poses[joint.b.link].orientation)
    return _hinge_angle(rel)


def _limit_diagnostics(definition: AssemblyDef, angles: Mapping[str, float]) -> list[Diagnostic]:
    diagnostics = []
    for joint in definition.joints:
        if joint.angle_limits is None or joint.name not in angles:
            continue
        lo, hi = joint.angle_limits
        degrees = angles[joint.name]
        if not (lo - LIMIT_SLACK_DEGREES <= degrees <= hi + LIMIT_SLACK_DEGREES):
            diagnostics.append(
                warning(
                    DiagnosticCode.LIMIT_VIOLATION,
                    f"joint {joint.name!r} sits at {degrees:.3f} deg, outside its limits [{lo:g}, {hi:g}]",
                    [joint.name],
                    angle=degrees,
                    lo=lo,
                    hi=hi,
                ),
            )
    return diagnostics


def _failure_diagnostic(system: ConstraintSystem, state: np.ndarray, r: np.ndarray) -> Diagnostic:
    norm = float(np.linalg.norm(r))
    blocks = _block_norms(system, r)
    violated = [name for name, value in blocks.items() if value > INCONSISTENCY_THRESHOLD]
    worst = max(blocks, key=lambda name: blocks[name]) if blocks else None
    rank = matrix_rank(jacobian(system, state))
    overdetermined = system.equation_count > rank
    if norm > INCONSISTENCY_THRESHOLD and rank == system.unknown_count and overdetermined and violated:
        details = ", ".join(f"{name} ({blocks[name]:.6g})" for name in violated)
        return error(
            DiagnosticCode.INCONSISTENT_CONSTRAINTS,
            f"joints {', '.join(violated)} contradict each other: no placement satisfies all of them; "
            f"the closest compromise leaves residual {norm:.6g} (per joint: {details}). "
            "Remove one of these joints or change its faces or offset.",
            violated,
            residual_norm=norm,
            rank=rank,
            equations=system.equation_count,
        )
    subjects = [worst] if worst is not None else []
    return error(
        DiagnosticCode.CONVERGENCE_FAILURE,
        f"solver did not converge: residual {norm:.6g} after iterating; "
        f"worst-violated joint is {worst!r}" + (f" ({blocks[worst]:.6g})" if worst is not None else ""),
        subjects,
        residual_norm=norm,
        worst_joint=worst,
    )


def _damped_newton(system: ConstraintSystem, state: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    r = residual(system, state)
    norm = float(np.linalg.norm(r))
    damping = LAMBDA_START
    iterations = 0
    identity = np.eye(state.size)
    while iterations < MAX_ITERATIONS and norm > TOLERANCE:
        iterations += 1
        jac = jacobian(system, state)
        normal = jac.T @ jac
        gradient = jac.T @ r
        accepted = False
        while True:
            step = np.linalg.lstsq(normal + damping * identity, -gradient, rcond=None)[0]
            trial = _renormalize(system, state + step)
            trial_r = residual(system, trial)
            trial_norm = float(np.linalg.norm(trial_r))
            if trial_norm < norm:
                accepted = True
                damping = max(damping * LAMBDA_DECREASE, LAMBDA_MIN)
                break
            if damping >= LAMBDA_MAX:
                break
            damping = min(damping * LAMBDA_INCREASE, LAMBDA_MAX)
        if not accepted:
            logger.debug("No descent step at iteration %d (residual %.3g)", iterations, norm)
            break
        improvement = norm - trial_norm
        state, r, norm = trial, trial_r, trial_norm
        logger.debug("Iteration %d: residual %.3g, damping %.1e", iterations, norm, damping)
        if improvement <= 1e-14 * max(1.0, norm):  # noqa: PLR2004
            break
    return state, r, iterations


def solve(system: ConstraintSystem, initial: Mapping[str, Pose] | None = None) -> SolveOutcome:
    """
    Solve for every link pose.

    Starts from ``initial`` where given and the breadth-first placement elsewhere.
    Failures never raise: the outcome always carries poses for every link plus
    ConvergenceFailure or InconsistentConstraints diagnostics.
    """
    start = initial_poses(system)
    if initial is not None:
        start.update({name: pose for name, pose in initial.items() if name in start})
    state = _renormalize(system, pack_state(system, start))

    state, r, iterations = _damped_newton(system, state)
    norm = float(np.linalg.norm(r))
    converged = norm <= TOLERANCE
    diagnostics: list[Diagnostic] = []
    if not converged:
        diagnostics.append(_failure_diagnostic(system, state, r))

    dof, dof_diagnostics = dof_analysis(system, state)
    diagnostics.extend(dof_diagnostics)

    poses = unpack_state(system, state)
    angles = {
        joint.name: math.degrees(measure_joint_angle(system.definition, poses, joint.name))
        for joint in system.definition.joints
        if joint.kind is JointKind.REVOLUTE
    }
    diagnostics.extend(_limit_diagnostics(system.definition, angles))
    logger.info(
        "Solve %s after %d iterations: residual %.3g, dof %d",
        "converged" if converged else "failed",
        iterations,
        norm,
        dof,
    )
    return SolveOutcome(poses, converged, norm, iterations, dof, tuple(diagnostics), angles)


def pose_to_dict(pose: Pose) -> dict[str, list[float | int]]:
    """JSON form of a pose with stable rounding."""
    return {
        "position": [round_number(c) for c in pose.position],
        "quaternion": [round_number(c) for c in pose.orientation.as_tuple()],
    }


def solve_report(outcome: SolveOutcome, extra: list[Diagnostic] | None = None) -> str:
    """Canonical JSON report of a solve."""
    diagnostics = list(outcome.diagnostics) + list(extra or [])
    document = {
        "converged": outcome.converged,
        "residual_norm": round_number(outcome.residual_norm, 12),
        "iterations": outcome.iterations,
        "dof": outcome.dof,
        "poses": {name: pose_to_dict(pose) for name, pose in outcome.poses.items()},
        "joint_angles": {name: round_number(value) for name, value in outcome.joint_angles.items()},
        "diagnostics": [d.to_dict() for d in diagnostics],
    }
    return json.dumps(document, indent=2) + "\n"
