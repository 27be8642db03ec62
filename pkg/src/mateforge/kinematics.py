"""
Pose algebra and box geometry.

Conventions:

- Quaternions are (w, x, y, z), unit norm, and sign-canonical: w >= 0, and when
  w == 0 the first nonzero of (x, y, z) is positive. One representative per rotation.
- ``quat_compose(a, b)`` applies b first, then a.
- Parts are boxes centered on their centroid, axes along the box edges, dims are full
  extents in millimeters.
- Faces enumerate PosX, NegX, PosY, NegY, PosZ, NegZ. Edges are the 12 pairs of
  adjacent faces (first, second) with first before second in face order, sorted.
- Face frames: for a normal along +/- axis k, tangent_u is the next axis in cyclic
  order (x -> y -> z -> x) and tangent_v = normal x tangent_u, so u x v = n.
"""

import itertools
import math
from dataclasses import dataclass
from enum import StrEnum
from functools import cache
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from mateforge.ir import Part

Vec3 = tuple[float, float, float]

UNIT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Quaternion:
    """Rotation as a unit quaternion, components in (w, x, y, z) order."""

    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        """Components as a float array."""
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def as_tuple(self) -> tuple[float, float, float, float]:
        """Components as a tuple."""
        return (self.w, self.x, self.y, self.z)


IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Pose:
    """Rigid placement of a link: position in mm plus orientation."""

    position: Vec3 = (0.0, 0.0, 0.0)
    orientation: Quaternion = IDENTITY


class Face(StrEnum):
    """The six faces of a box."""

    POS_X = "PosX"
    NEG_X = "NegX"
    POS_Y = "PosY"
    NEG_Y = "NegY"
    POS_Z = "PosZ"
    NEG_Z = "NegZ"

    @property
    def axis(self) -> int:
        """Index of the axis the face normal lies along."""
        return FACES.index(self) // 2

    @property
    def sign(self) -> float:
        """+1.0 for positive faces, -1.0 for negative ones."""
        return 1.0 if FACES.index(self) % 2 == 0 else -1.0

    @property
    def opposite(self) -> "Face":
        """The face on the other side of the box."""
        index = FACES.index(self)
        return FACES[index + 1 if index % 2 == 0 else index - 1]


FACES: tuple[Face, ...] = tuple(Face)


class EdgeId(NamedTuple):
    """An edge named by its two adjacent faces in canonical order."""

    first: Face
    second: Face

    @property
    def tag(self) -> str:
        """Compact name such as ``PosX-PosY``."""
        return f"{self.first}-{self.second}"


EDGES: tuple[EdgeId, ...] = tuple(
    EdgeId(FACES[i], FACES[j])
    for i, j in itertools.combinations(range(len(FACES)), 2)
    if i // 2 != j // 2
)


@dataclass(frozen=True)
class FaceFrame:
    """Part-local frame attached to the center of a face."""

    origin: Vec3
    normal: Vec3
    tangent_u: Vec3
    tangent_v: Vec3

    def matrix(self) -> np.ndarray:
        """Rotation matrix whose columns are (u, v, n)."""
        return np.column_stack([self.tangent_u, self.tangent_v, self.normal])


def _vec(values: np.ndarray | list[float] | tuple[float, ...]) -> Vec3:
    return (float(values[0]), float(values[1]), float(values[2]))


def quat_canonical(q: Quaternion) -> Quaternion:
    """Pick the sign representative with w >= 0 (first nonzero positive on ties)."""
    flip = q.w < 0
    if q.w == 0:
        for component in (q.x, q.y, q.z):
            if component != 0:
                flip = component < 0
                break
    if flip:
        return Quaternion(-q.w, -q.x, -q.y, -q.z)
    return q


def quat_normalize(q: Quaternion) -> Quaternion:
    """Scale to unit norm and canonicalize the sign."""
    norm = math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z)
    if norm == 0 or not math.isfinite(norm):
        msg = f"Cannot normalize quaternion {q.as_tuple()}"
        raise ValueError(msg)
    return quat_canonical(Quaternion(q.w / norm, q.x / norm, q.y / norm, q.z / norm))


def quat_from_axis_angle(axis: Vec3 | np.ndarray, angle: float) -> Quaternion:
    """Rotation by ``angle`` radians about ``axis`` (any nonzero length)."""
    a = np.asarray(axis, dtype=float)
    length = float(np.linalg.norm(a))
    if length == 0 or not math.isfinite(length):
        msg = "Rotation axis must be a nonzero finite vector"
        raise ValueError(msg)
    a = a / length
    half = 0.5 * angle
    s = math.sin(half)
    return quat_normalize(Quaternion(math.cos(half), a[0] * s, a[1] * s, a[2] * s))


def quat_to_axis_angle(q: Quaternion) -> tuple[Vec3, float]:
    """Axis and angle in [0, pi]; the identity reports axis +X and angle 0."""
    c = quat_canonical(q)
    s = math.sqrt(c.x * c.x + c.y * c.y + c.z * c.z)
    if s < 1e-15:  # noqa: PLR2004
        return (1.0, 0.0, 0.0), 0.0
    angle = 2.0 * math.atan2(s, c.w)
    return (c.x / s, c.y / s, c.z / s), angle


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Raw Hamilton product a * b, no normalization."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_conjugate(q: Quaternion) -> Quaternion:
    """Conjugate; the inverse of a unit quaternion."""
    return Quaternion(q.w, -q.x, -q.y, -q.z)


def quat_inverse(q: Quaternion) -> Quaternion:
    """Inverse rotation, sign-canonical."""
    return quat_normalize(quat_conjugate(q))


def quat_compose(a: Quaternion, b: Quaternion) -> Quaternion:
    """Rotation applying b first, then a."""
    return quat_normalize(quat_multiply(a, b))


def quat_to_matrix(q: Quaternion) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
    )


def quat_from_matrix(m: np.ndarray) -> Quaternion:
    """Unit quaternion of a rotation matrix (Shepperd's branch selection)."""
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = Quaternion(
            0.25 * s,
            (m[2, 1] - m[1, 2]) / s,
            (m[0, 2] - m[2, 0]) / s,
            (m[1, 0] - m[0, 1]) / s,
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = Quaternion(
            (m[2, 1] - m[1, 2]) / s,
            0.25 * s,
            (m[0, 1] + m[1, 0]) / s,
            (m[0, 2] + m[2, 0]) / s,
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = Quaternion(
            (m[0, 2] - m[2, 0]) / s,
            (m[0, 1] + m[1, 0]) / s,
            0.25 * s,
            (m[1, 2] + m[2, 1]) / s,
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = Quaternion(
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        )
    return quat_normalize(q)


def quat_rotate(q: Quaternion, v: Vec3 | np.ndarray) -> Vec3:
    """Rotate a vector by q."""
    u = np.array([q.x, q.y, q.z])
    vec = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(u, vec)
    return _vec(vec + q.w * t + np.cross(u, t))


def pose_apply(pose: Pose, point: Vec3 | np.ndarray) -> Vec3:
    """Map a part-local point to world coordinates."""
    rotated = quat_rotate(pose.orientation, point)
    p = pose.position
    return (rotated[0] + p[0], rotated[1] + p[1], rotated[2] + p[2])


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Pose of b expressed in a's parent frame (apply b, then a)."""
    return Pose(pose_apply(a, b.position), quat_compose(a.orientation, b.orientation))


def pose_inverse(pose: Pose) -> Pose:
    """Inverse rigid transform."""
    inverse = quat_inverse(pose.orientation)
    back = quat_rotate(inverse, pose.position)
    return Pose((-back[0], -back[1], -back[2]), inverse)


def half_extents(part: "Part") -> np.ndarray:
    """Half of the part dims as an array."""
    return 0.5 * np.asarray(part.dims, dtype=float)


@cache
def _face_axes(face: Face) -> tuple[Vec3, Vec3, Vec3]:
    basis = np.eye(3)
    normal = face.sign * basis[face.axis]
    tangent_u = basis[(face.axis + 1) % 3]
    tangent_v = np.cross(normal, tangent_u)
    return _vec(normal), _vec(tangent_u), _vec(tangent_v)


def face_frame(part: "Part", face: Face) -> FaceFrame:
    """Frame at the center of ``face`` with outward normal."""
    normal, tangent_u, tangent_v = _face_axes(face)
    origin = [0.0, 0.0, 0.0]
    origin[face.axis] = face.sign * 0.5 * float(part.dims[face.axis])
    return FaceFrame(_vec(origin), normal, tangent_u, tangent_v)


@cache
def face_rotation(face: Face) -> Quaternion:
    """Orientation of a face frame relative to its part (depends only on the face)."""
    normal, tangent_u, tangent_v = _face_axes(face)
    return quat_from_matrix(np.column_stack([tangent_u, tangent_v, normal]))


def face_vertices(part: "Part", face: Face) -> np.ndarray:
    """Four part-local corners of a face, counterclockwise about the outward normal."""
    frame = face_frame(part, face)
    h = half_extents(part)
    hu = h[(face.axis + 1) % 3]
    hv = h[(face.axis + 2) % 3]
    origin = np.asarray(frame.origin)
    u = np.asarray(frame.tangent_u)
    v = np.asarray(frame.tangent_v)
    return np.array(
        [origin + su * hu * u + sv * hv * v for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))],
    )


def face_edges(face: Face) -> tuple[EdgeId, ...]:
    """The four edges bounding a face, in canonical edge order."""
    return tuple(edge for edge in EDGES if face in edge)


def edge_endpoints(part: "Part", edge: EdgeId) -> np.ndarray:
    """Part-local endpoints of an edge, lower coordinate first."""
    h = half_extents(part)
    free_axis = 3 - edge.first.axis - edge.second.axis
    point = np.zeros(3)
    point[edge.first.axis] = edge.first.sign * h[edge.first.axis]
    point[edge.second.axis] = edge.second.sign * h[edge.second.axis]
    start = point.copy()
    end = point.copy()
    start[free_axis] = -h[free_axis]
    end[free_axis] = h[free_axis]
    return np.array([start, end])


def prism_corners(part: "Part", pose: Pose) -> np.ndarray:
    """Eight world-space corners, x bit slowest: (-,-,-), (-,-,+), ..., (+,+,+)."""
    h = half_extents(part)
    local = np.array([np.multiply(signs, h) for signs in itertools.product((-1.0, 1.0), repeat=3)])
    rotation = quat_to_matrix(pose.orientation)
    return local @ rotation.T + np.asarray(pose.position, dtype=float)
