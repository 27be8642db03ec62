"""Pairwise interpenetration check for posed box links (separating-axis test)."""

import itertools
import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from mateforge.diagnostics import Diagnostic, DiagnosticCode, error, round_number
from mateforge.ir import AssemblyDef, Part
from mateforge.kinematics import Pose, half_extents, quat_to_matrix

logger = logging.getLogger(__name__)

CONTACT_TOLERANCE = 1e-9
_DEGENERATE_AXIS = 1e-9


@dataclass(frozen=True)
class OrientedBox:
    """A box in world space: center, unit axes as matrix columns, half extents."""

    center: np.ndarray
    axes: np.ndarray
    half: np.ndarray

    @classmethod
    def from_pose(cls, part: Part, pose: Pose) -> "OrientedBox":
        """Place a part's box at a pose."""
        return cls(
            np.asarray(pose.position, dtype=float),
            quat_to_matrix(pose.orientation),
            half_extents(part),
        )

    def radius(self, axis: np.ndarray) -> float:
        """Half-length of the box's projection onto a unit axis."""
        return float(np.sum(self.half * np.abs(self.axes.T @ axis)))


def candidate_axes(first: OrientedBox, second: OrientedBox) -> list[np.ndarray]:
    """The 3 + 3 face normals and the non-degenerate edge cross products, all unit length."""
    axes = [first.axes[:, i] for i in range(3)] + [second.axes[:, i] for i in range(3)]
    for i, j in itertools.product(range(3), repeat=2):
        cross = np.cross(first.axes[:, i], second.axes[:, j])
        length = float(np.linalg.norm(cross))
        if length > _DEGENERATE_AXIS:
            axes.append(cross / length)
    return axes


def penetration(first: OrientedBox, second: OrientedBox) -> tuple[float, np.ndarray] | None:
    """
    Minimum overlap over all candidate axes.

    Returns:
        (depth, axis) when the boxes overlap by more than the contact tolerance on every
        axis, otherwise None

    """
    offset = second.center - first.center
    best: tuple[float, np.ndarray] | None = None
    for axis in candidate_axes(first, second):
        overlap = first.radius(axis) + second.radius(axis) - abs(float(offset @ axis))
        if overlap <= CONTACT_TOLERANCE:
            return None
        if best is None or overlap < best[0]:
            best = (overlap, axis)
    return best


def check_intersections(definition: AssemblyDef, poses: Mapping[str, Pose]) -> list[Diagnostic]:
    """One Intersection diagnostic per overlapping link pair, in link order."""
    boxes = {
        link.name: OrientedBox.from_pose(definition.part(link.part), poses[link.name])
        for link in definition.links
    }
    diagnostics = []
    for first, second in itertools.combinations(definition.link_names, 2):
        hit = penetration(boxes[first], boxes[second])
        if hit is None:
            continue
        depth, axis = hit
        logger.debug("Links %s and %s overlap by %.6g mm", first, second, depth)
        diagnostics.append(
            error(
                DiagnosticCode.INTERSECTION,
                f"links {first} and {second} interpenetrate by {depth:.6g} mm; "
                "move them apart or change the mated faces",
                [first, second],
                depth=depth,
                axis=[round_number(c) for c in axis],
            ),
        )
    return diagnostics
