"""
JSON intermediate representation for box assemblies.

An assembly file has three sections: ``parts`` (box definitions, inline or pointers to
``*.part.json`` files), ``links`` (named part instances, some grounded), and ``joints``
(face-to-face mates between two links). Parsing never raises on bad input; problems come
back as a list of diagnostics.
"""

import json
import logging
import math
import re
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import BaseModel, BeforeValidator, ConfigDict, ValidationError

from mateforge.diagnostics import Diagnostic, DiagnosticCode, error
from mateforge.kinematics import Face, Pose, Vec3, quat_from_axis_angle

logger = logging.getLogger(__name__)

NAME_PATTERN = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
PART_SUFFIX = ".part.json"
ASSEMBLY_SUFFIX = ".asm.json"
AXIS_TOLERANCE = 1e-9
DEFAULT_AXIS = (0.0, 0.0, 1.0)


class Shape(StrEnum):
    """Part primitives. Only boxes are supported."""

    BOX = "box"


class JointKind(StrEnum):
    """Supported joint types."""

    FIXED = "fixed"
    REVOLUTE = "revolute"


class Dof(StrEnum):
    """Relative degrees of freedom a joint can leave free."""

    ROT_Z = "RotZ"


FREE_DOFS: dict[JointKind, tuple[Dof, ...]] = {
    JointKind.FIXED: (),
    JointKind.REVOLUTE: (Dof.ROT_Z,),
}


@dataclass(frozen=True)
class Part:
    """A named box with full extents ``dims`` (mm) along local X/Y/Z."""

    name: str
    dims: Vec3
    shape: Shape = Shape.BOX


@dataclass(frozen=True)
class Placement:
    """World placement of a grounded link as written in the IR (angle in degrees)."""

    position: Vec3 = (0.0, 0.0, 0.0)
    axis: Vec3 = DEFAULT_AXIS
    angle: float = 0.0

    @property
    def is_default(self) -> bool:
        """True when every field has its default value, so serialization may omit it."""
        return self.angle == 0 and all(c == 0 for c in self.position) and tuple(self.axis) == DEFAULT_AXIS

    @property
    def pose(self) -> Pose:
        """The placement as a solver pose."""
        rotation = quat_from_axis_angle(self.axis, math.radians(self.angle))
        return Pose(tuple(float(c) for c in self.position), rotation)  # type: ignore[arg-type]


@dataclass(frozen=True)
class Link:
    """One instance of a part in the assembly."""

    name: str
    part: str
    grounded: bool = False
    placement: Placement = field(default_factory=Placement)


@dataclass(frozen=True)
class FaceRef:
    """A face of a specific link."""

    link: str
    face: Face


@dataclass(frozen=True)
class Joint:
    """A face-to-face mate between links ``a.link`` and ``b.link``."""

    name: str
    kind: JointKind
    a: FaceRef
    b: FaceRef
    offset: tuple[float, float] = (0.0, 0.0)
    angle_limits: tuple[float, float] | None = None
    free_dofs: tuple[Dof, ...] = ()

    @property
    def links(self) -> tuple[str, str]:
        """Names of the two joined links."""
        return (self.a.link, self.b.link)


@dataclass(frozen=True)
class AssemblyDef:
    """Parts catalog, part instances, and the joints between them."""

    parts: tuple[Part, ...] = ()
    links: tuple[Link, ...] = ()
    joints: tuple[Joint, ...] = ()

    def part(self, name: str) -> Part:
        """Look up a part by name."""
        for part in self.parts:
            if part.name == name:
                return part
        raise KeyError(name)

    def link(self, name: str) -> Link:
        """Look up a link by name."""
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(name)

    def joint(self, name: str) -> Joint:
        """Look up a joint by name."""
        for joint in self.joints:
            if joint.name == name:
                return joint
        raise KeyError(name)

    def part_of(self, link_name: str) -> Part:
        """The part a link instantiates."""
        return self.part(self.link(link_name).part)

    @property
    def link_names(self) -> tuple[str, ...]:
        """Link names in definition order."""
        return tuple(link.name for link in self.links)


# JSON document schemas


def _lowercase(value: Any) -> Any:
    return value.lower() if isinstance(value, str) else value


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PartDocument(_Document):
    """Schema of a part file or an inline part entry."""

    name: str
    shape: str
    dims: list[float]


class PartPointerDocument(_Document):
    """A parts-section entry pointing at a part file."""

    name: str
    file: str | None = None


class FaceRefDocument(_Document):
    """Schema of a joint end given by link and face."""

    link: str
    face: Face


class PlacementDocument(_Document):
    """Schema of a grounded link placement."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    angle: float = 0.0


class LinkDocument(_Document):
    """Schema of a links-section entry."""

    name: str
    part: str
    grounded: bool = False
    placement: PlacementDocument | None = None


class JointDocument(_Document):
    """Schema of a joints-section entry; ends are face refs or style tokens."""

    name: str
    kind: Annotated[JointKind, BeforeValidator(_lowercase)]
    a: FaceRefDocument | str
    b: FaceRefDocument | str
    offset: tuple[float, float] = (0.0, 0.0)
    limits: tuple[float, float] | None = None
    free_dofs: list[Dof] | None = None


class AssemblyDocument(_Document):
    """Schema of an assembly file."""

    parts: list[PartDocument | PartPointerDocument | str] = []
    links: list[LinkDocument]
    joints: list[JointDocument] = []


# Parsing


def _decode(text: str | bytes, source: str) -> str | list[Diagnostic]:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as e:
        return [error(DiagnosticCode.PARSE_ERROR, f"{source}: not valid UTF-8 ({e.reason})")]


def _validation_diagnostics(exc: ValidationError, source: str) -> list[Diagnostic]:
    diagnostics = []
    for item in exc.errors(include_url=False):
        location = ".".join(str(part) for part in item["loc"])
        if item["type"] == "json_invalid":
            message = f"{source}: malformed JSON: {item['msg']}"
        elif location:
            message = f"{source}: {location}: {item['msg']}"
        else:
            message = f"{source}: {item['msg']}"
        diagnostics.append(error(DiagnosticCode.PARSE_ERROR, message))
    return diagnostics


def _validate_document[T: BaseModel](
    model: type[T],
    text: str | bytes,
    source: str,
) -> T | list[Diagnostic]:
    decoded = _decode(text, source)
    if isinstance(decoded, list):
        return decoded
    try:
        return model.model_validate_json(decoded)
    except ValidationError as e:
        return _validation_diagnostics(e, source)
    except (ValueError, RecursionError) as e:
        return [error(DiagnosticCode.PARSE_ERROR, f"{source}: malformed JSON: {e}")]


def check_part(part: Part, source: str = "part") -> list[Diagnostic]:
    """Check the Part invariants: identifier name, box shape, positive finite dims."""
    diagnostics = []
    if not NAME_PATTERN.fullmatch(part.name):
        diagnostics.append(
            error(
                DiagnosticCode.PARSE_ERROR,
                f"{source}: part name {part.name!r} must match [A-Za-z][A-Za-z0-9_]*",
            ),
        )
    if str(part.shape).lower() != Shape.BOX:
        diagnostics.append(
            error(
                DiagnosticCode.PARSE_ERROR,
                f"{source}: part {part.name!r} has shape {part.shape!r}; only 'box' is supported",
            ),
        )
    if len(part.dims) != 3:  # noqa: PLR2004
        diagnostics.append(
            error(
                DiagnosticCode.PARSE_ERROR,
                f"{source}: part {part.name!r} dims must have exactly 3 entries",
            ),
        )
    elif not all(math.isfinite(d) and d > 0 for d in part.dims):
        diagnostics.append(
            error(
                DiagnosticCode.PARSE_ERROR,
                f"{source}: part {part.name!r} dims must be strictly positive and finite, "
                f"got {list(part.dims)}",
            ),
        )
    return diagnostics


def _part_from_document(document: PartDocument, source: str) -> Part | list[Diagnostic]:
    candidate = Part(document.name, tuple(document.dims), document.shape)  # type: ignore[arg-type]
    diagnostics = check_part(candidate, source)
    if diagnostics:
        return diagnostics
    return Part(document.name, tuple(float(d) for d in document.dims), Shape.BOX)  # type: ignore[arg-type]


def parse_part(text: str | bytes, *, source: str = "part") -> Part | list[Diagnostic]:
    """Parse a part file; returns a Part or one diagnostic per violation."""
    document = _validate_document(PartDocument, text, source)
    if isinstance(document, list):
        return document
    return _part_from_document(document, source)


def load_part(path: Path) -> Part | list[Diagnostic]:
    """Read and parse a part file from disk."""
    try:
        data = path.read_bytes()
    except OSError as e:
        return [error(DiagnosticCode.UNRESOLVED_REFERENCE, f"Could not read part file {path.name}: {e}")]
    return parse_part(data, source=path.name)


def _duplicates(names: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    repeated: list[str] = []
    for name in names:
        if name in seen and name not in repeated:
            repeated.append(name)
        seen.add(name)
    return repeated


class _PartResolver:
    """Resolves parts-section entries against a catalog and the assembly directory."""

    def __init__(self, catalog: Sequence[Part], base_dir: Path | None, source: str) -> None:
        self.catalog = {part.name: part for part in catalog}
        self.base_dir = base_dir
        self.source = source

    def resolve(
        self,
        entry: PartDocument | PartPointerDocument | str,
    ) -> Part | list[Diagnostic]:
        if isinstance(entry, PartDocument):
            return _part_from_document(entry, self.source)
        if isinstance(entry, str):
            return self._by_name(entry)
        if entry.file is not None and self.base_dir is not None:
            return self._from_file(entry.name, self.base_dir / entry.file)
        return self._by_name(entry.name)

    def _by_name(self, name: str) -> Part | list[Diagnostic]:
        if name in self.catalog:
            return self.catalog[name]
        if self.base_dir is not None:
            candidates = [
                path
                for path in (
                    self.base_dir / f"{name}{PART_SUFFIX}",
                    self.base_dir / "parts" / f"{name}{PART_SUFFIX}",
                )
                if path.is_file()
            ]
            if len(candidates) == 1:
                return self._from_file(name, candidates[0])
            if len(candidates) > 1:
                return [
                    error(
                        DiagnosticCode.UNRESOLVED_REFERENCE,
                        f"{self.source}: part {name!r} is ambiguous: "
                        + ", ".join(str(c.relative_to(self.base_dir)) for c in candidates),
                        [name],
                    ),
                ]
        return [
            error(
                DiagnosticCode.UNRESOLVED_REFERENCE,
                f"{self.source}: part {name!r} has no definition",
                [name],
            ),
        ]

    def _from_file(self, name: str, path: Path) -> Part | list[Diagnostic]:
        if not path.is_file():
            return [
                error(
                    DiagnosticCode.UNRESOLVED_REFERENCE,
                    f"{self.source}: part {name!r} points to missing file {path.name!r}",
                    [name],
                ),
            ]
        part = load_part(path)
        if isinstance(part, list):
            return part
        if part.name != name:
            return [
                error(
                    DiagnosticCode.UNRESOLVED_REFERENCE,
                    f"{self.source}: part {name!r} points to {path.name!r}, "
                    f"which defines part {part.name!r}",
                    [name],
                ),
            ]
        return part


def _placement(document: PlacementDocument | None) -> Placement:
    if document is None:
        return Placement()
    return Placement(document.position, document.axis, document.angle)


def parse_assembly(
    text: str | bytes,
    catalog: Sequence[Part] = (),
    *,
    source: str = "assembly",
    base_dir: Path | None = None,
) -> AssemblyDef | list[Diagnostic]:
    """
    Parse and resolve an assembly file.

    Parts entries resolve against ``catalog`` first; with ``base_dir`` set, pointers and
    bare names are also looked up as part files relative to it. Joint ends given as style
    tokens resolve through the visual map of the parsed links.

    Returns:
        A fully resolved AssemblyDef, or diagnostics. Partial results are never returned.

    """
    document = _validate_document(AssemblyDocument, text, source)
    if isinstance(document, list):
        return document

    diagnostics: list[Diagnostic] = []
    resolver = _PartResolver(catalog, base_dir, source)

    parts: list[Part] = []
    for entry in document.parts:
        resolved = resolver.resolve(entry)
        if isinstance(resolved, list):
            diagnostics.extend(resolved)
        else:
            parts.append(resolved)
    for name in _duplicates(p.name for p in parts):
        diagnostics.append(
            error(DiagnosticCode.DUPLICATE_NAME, f"{source}: part {name!r} is defined more than once", [name]),
        )

    part_names = {p.name for p in parts}
    links = []
    for link_doc in document.links:
        if link_doc.part not in part_names and not _has_entry(document, link_doc.part):
            diagnostics.append(
                error(
                    DiagnosticCode.UNRESOLVED_REFERENCE,
                    f"{source}: link {link_doc.name!r} references unknown part {link_doc.part!r}",
                    [link_doc.name, link_doc.part],
                ),
            )
        links.append(Link(link_doc.name, link_doc.part, link_doc.grounded, _placement(link_doc.placement)))
    for name in _duplicates(link.name for link in links):
        diagnostics.append(
            error(DiagnosticCode.DUPLICATE_NAME, f"{source}: link {name!r} is defined more than once", [name]),
        )
    for name in _duplicates(j.name for j in document.joints):
        diagnostics.append(
            error(DiagnosticCode.DUPLICATE_NAME, f"{source}: joint {name!r} is defined more than once", [name]),
        )

    if diagnostics:
        return diagnostics

    partial = AssemblyDef(tuple(parts), tuple(links), ())
    joints = _resolve_joints(document.joints, partial, source, diagnostics)
    if diagnostics:
        return diagnostics
    logger.debug("Parsed %s: %d parts, %d links, %d joints", source, len(parts), len(links), len(joints))
    return AssemblyDef(tuple(parts), tuple(links), tuple(joints))


def _has_entry(document: AssemblyDocument, name: str) -> bool:
    # A part whose entry failed to resolve was already reported; don't report its links too.
    for entry in document.parts:
        entry_name = entry if isinstance(entry, str) else entry.name
        if entry_name == name:
            return True
    return False


def _resolve_joints(
    documents: list[JointDocument],
    partial: AssemblyDef,
    source: str,
    diagnostics: list[Diagnostic],
) -> list[Joint]:
    link_names = set(partial.link_names)
    visual_map = None
    if any(isinstance(d.a, str) or isinstance(d.b, str) for d in documents):
        from mateforge.visual import assign_visual_ids  # noqa: PLC0415

        visual_map = assign_visual_ids(partial)

    joints = []
    for doc in documents:
        ends: list[FaceRef] = []
        for label, end in (("a", doc.a), ("b", doc.b)):
            ref: FaceRef | None
            if isinstance(end, str):
                ref = _resolve_token(visual_map, end, doc.name, label, source, diagnostics)
            else:
                ref = FaceRef(end.link, end.face)
                if ref.link not in link_names:
                    diagnostics.append(
                        error(
                            DiagnosticCode.UNRESOLVED_REFERENCE,
                            f"{source}: joint {doc.name!r} end {label} references unknown link {ref.link!r}",
                            [doc.name, ref.link],
                        ),
                    )
                    ref = None
            if ref is not None:
                ends.append(ref)
        if len(ends) != 2:  # noqa: PLR2004
            continue
        free_dofs = tuple(doc.free_dofs) if doc.free_dofs is not None else FREE_DOFS[doc.kind]
        joints.append(Joint(doc.name, doc.kind, ends[0], ends[1], doc.offset, doc.limits, free_dofs))
    return joints


def _resolve_token(  # noqa: PLR0913
    visual_map: Any,
    token: str,
    joint_name: str,
    label: str,
    source: str,
    diagnostics: list[Diagnostic],
) -> FaceRef | None:
    from mateforge.visual import resolve_face_token  # noqa: PLC0415

    result = resolve_face_token(visual_map, token)
    if isinstance(result, Diagnostic):
        diagnostics.append(
            error(
                result.code,
                f"{source}: joint {joint_name!r} end {label}: {result.message}",
                [joint_name, *result.subjects],
            ),
        )
        return None
    return result


def load_assembly(path: Path) -> AssemblyDef | list[Diagnostic]:
    """Read an assembly file and resolve its part pointers relative to its directory."""
    try:
        data = path.read_bytes()
    except OSError as e:
        return [error(DiagnosticCode.PARSE_ERROR, f"Could not read assembly file {path.name}: {e}")]
    return parse_assembly(data, source=path.name, base_dir=path.parent)


# Validation


def _joint_diagnostics(joint: Joint, link_names: set[str]) -> list[Diagnostic]:
    diagnostics = []
    for label, ref in (("a", joint.a), ("b", joint.b)):
        if ref.link not in link_names:
            diagnostics.append(
                error(
                    DiagnosticCode.UNRESOLVED_REFERENCE,
                    f"joint {joint.name!r} end {label} references unknown link {ref.link!r}",
                    [joint.name, ref.link],
                ),
            )
    if joint.a.link == joint.b.link:
        diagnostics.append(
            error(
                DiagnosticCode.INVALID_JOINT,
                f"joint {joint.name!r} joins link {joint.a.link!r} to itself",
                [joint.name, joint.a.link],
            ),
        )
    if tuple(joint.free_dofs) != FREE_DOFS[joint.kind]:
        expected = [str(d) for d in FREE_DOFS[joint.kind]]
        diagnostics.append(
            error(
                DiagnosticCode.INVALID_JOINT,
                f"joint {joint.name!r} is {joint.kind} so free_dofs must be {expected}, "
                f"got {[str(d) for d in joint.free_dofs]}",
                [joint.name],
            ),
        )
    if not all(math.isfinite(c) for c in joint.offset):
        diagnostics.append(
            error(DiagnosticCode.INVALID_JOINT, f"joint {joint.name!r} offset must be finite", [joint.name]),
        )
    if joint.angle_limits is not None:
        lo, hi = joint.angle_limits
        if joint.kind is not JointKind.REVOLUTE:
            diagnostics.append(
                error(
                    DiagnosticCode.INVALID_JOINT,
                    f"joint {joint.name!r} is {joint.kind}; only revolute joints take angle limits",
                    [joint.name],
                ),
            )
        if not (lo < hi):
            diagnostics.append(
                error(
                    DiagnosticCode.LIMIT_VIOLATION,
                    f"joint {joint.name!r} angle limits [{lo:g}, {hi:g}] must satisfy limits lo < hi",
                    [joint.name],
                    lo=lo,
                    hi=hi,
                ),
            )
    return diagnostics


def _placement_diagnostics(link: Link) -> list[Diagnostic]:
    placement = link.placement
    values = (*placement.position, *placement.axis, placement.angle)
    if not all(math.isfinite(v) for v in values):
        return [
            error(
                DiagnosticCode.PARSE_ERROR,
                f"link {link.name!r} placement must be finite, got position {list(placement.position)}, "
                f"axis {list(placement.axis)}, angle {placement.angle}",
                [link.name],
            ),
        ]
    length = math.hypot(*placement.axis)
    if not (AXIS_TOLERANCE < length < math.inf):
        return [
            error(
                DiagnosticCode.PARSE_ERROR,
                f"link {link.name!r} placement axis {list(placement.axis)} must be a nonzero finite vector",
                [link.name],
            ),
        ]
    return []


def _unreachable(definition: AssemblyDef) -> list[str]:
    neighbours: dict[str, list[str]] = {name: [] for name in definition.link_names}
    for joint in definition.joints:
        a, b = joint.links
        if a in neighbours and b in neighbours:
            neighbours[a].append(b)
            neighbours[b].append(a)
    reached = {link.name for link in definition.links if link.grounded}
    queue = deque(sorted(reached, key=definition.link_names.index))
    while queue:
        current = queue.popleft()
        for other in neighbours[current]:
            if other not in reached:
                reached.add(other)
                queue.append(other)
    return [name for name in definition.link_names if name not in reached]


def validate_assembly(definition: AssemblyDef) -> list[Diagnostic]:
    """
    Structural checks run before solving.

    Returns:
        An empty list iff every AssemblyDef invariant holds. Unreachable links are reported
        together in one FloatingComponent diagnostic.

    """
    diagnostics: list[Diagnostic] = []
    for part in definition.parts:
        diagnostics.extend(check_part(part))
    for section, names in (
        ("part", [p.name for p in definition.parts]),
        ("link", [link.name for link in definition.links]),
        ("joint", [j.name for j in definition.joints]),
    ):
        for name in _duplicates(names):
            diagnostics.append(
                error(DiagnosticCode.DUPLICATE_NAME, f"{section} {name!r} is defined more than once", [name]),
            )

    part_names = {p.name for p in definition.parts}
    for link in definition.links:
        if link.part not in part_names:
            diagnostics.append(
                error(
                    DiagnosticCode.UNRESOLVED_REFERENCE,
                    f"link {link.name!r} references unknown part {link.part!r}",
                    [link.name, link.part],
                ),
            )
        diagnostics.extend(_placement_diagnostics(link))

    link_names = set(definition.link_names)
    for joint in definition.joints:
        diagnostics.extend(_joint_diagnostics(joint, link_names))

    if not any(link.grounded for link in definition.links):
        diagnostics.append(
            error(
                DiagnosticCode.FLOATING_COMPONENT,
                "assembly has no grounded link; mark one of "
                + ", ".join(definition.link_names)
                + " \"grounded\": true",
                definition.link_names,
            ),
        )
    else:
        floating = _unreachable(definition)
        if floating:
            diagnostics.append(
                error(
                    DiagnosticCode.FLOATING_COMPONENT,
                    "links not connected to any grounded link: " + ", ".join(floating),
                    floating,
                ),
            )
    return diagnostics


# Serialization


def _number(value: float) -> float | int:
    as_float = float(value)
    if as_float.is_integer() and abs(as_float) < 1e15:  # noqa: PLR2004
        return int(as_float)
    return as_float


def _numbers(values: Iterable[float]) -> list[float | int]:
    return [_number(v) for v in values]


def _part_dict(part: Part) -> dict[str, Any]:
    return {"name": part.name, "shape": str(part.shape), "dims": _numbers(part.dims)}


def _link_dict(link: Link) -> dict[str, Any]:
    data: dict[str, Any] = {"name": link.name, "part": link.part, "grounded": link.grounded}
    if not link.placement.is_default:
        data["placement"] = {
            "position": _numbers(link.placement.position),
            "axis": _numbers(link.placement.axis),
            "angle": _number(link.placement.angle),
        }
    return data


def _joint_dict(joint: Joint) -> dict[str, Any]:
    data: dict[str, Any] = {
        "name": joint.name,
        "kind": str(joint.kind),
        "a": {"link": joint.a.link, "face": str(joint.a.face)},
        "b": {"link": joint.b.link, "face": str(joint.b.face)},
        "offset": _numbers(joint.offset),
    }
    if joint.angle_limits is not None:
        data["limits"] = _numbers(joint.angle_limits)
    data["free_dofs"] = [str(d) for d in joint.free_dofs]
    return data


def serialize_part(part: Part) -> str:
    """Canonical part-file text."""
    return json.dumps(_part_dict(part), indent=2) + "\n"


def serialize_assembly(definition: AssemblyDef) -> str:
    """Canonical, byte-deterministic assembly text with parts inlined."""
    document = {
        "parts": [_part_dict(p) for p in definition.parts],
        "links": [_link_dict(link) for link in definition.links],
        "joints": [_joint_dict(j) for j in definition.joints],
    }
    return json.dumps(document, indent=2) + "\n"
