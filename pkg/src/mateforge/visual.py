"""
Visual identifiers: a unique color + line texture for every face and edge of every
link, and a unique text label per link.

Styles are handed out by walking links in definition order and faces/edges in canonical
order. Entry ``i`` of a class gets color ``PALETTE[i % 24]`` and texture
``TEXTURES[i // 24]``, so each class holds 96 styles. Face tokens look like
``red-solid``; edge tokens add an ``-edge`` suffix (``red-solid-edge``).
"""

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from mateforge.diagnostics import AssemblyError, Diagnostic, DiagnosticCode, error, warning
from mateforge.ir import AssemblyDef, FaceRef
from mateforge.kinematics import EDGES, FACES, EdgeId, Face

RGB = tuple[int, int, int]

# 24 hues at 15 degree spacing, ordered with stride 5 so neighbors differ by 75 degrees.
PALETTE: tuple[tuple[str, RGB], ...] = (
    ("red", (255, 0, 0)),
    ("lime", (191, 255, 0)),
    ("spring", (0, 255, 128)),
    ("cobalt", (0, 64, 255)),
    ("magenta", (255, 0, 255)),
    ("vermilion", (255, 64, 0)),
    ("chartreuse", (128, 255, 0)),
    ("aquamarine", (0, 255, 191)),
    ("blue", (0, 0, 255)),
    ("cerise", (255, 0, 191)),
    ("orange", (255, 128, 0)),
    ("harlequin", (64, 255, 0)),
    ("cyan", (0, 255, 255)),
    ("indigo", (64, 0, 255)),
    ("rose", (255, 0, 128)),
    ("amber", (255, 191, 0)),
    ("green", (0, 255, 0)),
    ("capri", (0, 191, 255)),
    ("violet", (128, 0, 255)),
    ("crimson", (255, 0, 64)),
    ("yellow", (255, 255, 0)),
    ("emerald", (0, 255, 64)),
    ("azure", (0, 128, 255)),
    ("purple", (191, 0, 255)),
)


class Texture(StrEnum):
    """Line textures for edges and overlay patterns for faces."""

    SOLID = "solid"
    DASHED = "dashed"
    DOTTED = "dotted"
    DASH_DOT = "dashdot"


TEXTURES: tuple[Texture, ...] = tuple(Texture)
STYLE_CAPACITY = len(PALETTE) * len(TEXTURES)


class EntityKind(StrEnum):
    """What a style token identifies."""

    FACE = "face"
    EDGE = "edge"


@dataclass(frozen=True)
class Style:
    """A color and texture pair with its agent-facing token."""

    color: RGB
    texture: Texture
    token: str
    color_name: str
    kind: EntityKind

    @property
    def hex(self) -> str:
        """Color as ``#rrggbb``."""
        return "#{:02x}{:02x}{:02x}".format(*self.color)


@dataclass(frozen=True)
class LegendRow:
    """One legend line: which entity a token names."""

    token: str
    link: str
    label: str
    kind: EntityKind
    entity: str
    style: Style


@dataclass(frozen=True)
class VisualMap:
    """Labels and styles for every link, face, and edge of an assembly."""

    instance_labels: Mapping[str, str]
    face_styles: Mapping[tuple[str, Face], Style]
    edge_styles: Mapping[tuple[str, EdgeId], Style]
    legend: tuple[LegendRow, ...]
    diagnostics: tuple[Diagnostic, ...] = ()
    _by_token: Mapping[str, LegendRow] = field(default_factory=dict, repr=False, compare=False)

    def row(self, token: str) -> LegendRow | None:
        """Legend row for a token, if assigned."""
        return self._by_token.get(token.strip().lower())


def style_for(index: int, kind: EntityKind) -> Style:
    """The index-th style of a class."""
    color_name, rgb = PALETTE[index % len(PALETTE)]
    texture = TEXTURES[index // len(PALETTE)]
    token = f"{color_name}-{texture}"
    if kind is EntityKind.EDGE:
        token += "-edge"
    return Style(rgb, texture, token, color_name, kind)


def instance_labels(definition: AssemblyDef) -> dict[str, str]:
    """Capitalized part name plus a 1-based per-part index, in link order."""
    counts: dict[str, int] = {}
    labels = {}
    for link in definition.links:
        counts[link.part] = counts.get(link.part, 0) + 1
        labels[link.name] = f"{link.part[:1].upper()}{link.part[1:]}{counts[link.part]}"
    return labels


def assign_visual_ids(definition: AssemblyDef) -> VisualMap:
    """Deterministically label every link and style every face and edge."""
    labels = instance_labels(definition)
    face_styles: dict[tuple[str, Face], Style] = {}
    edge_styles: dict[tuple[str, EdgeId], Style] = {}
    legend: list[LegendRow] = []
    unstyled: dict[EntityKind, list[str]] = {EntityKind.FACE: [], EntityKind.EDGE: []}

    for link in definition.links:
        for face in FACES:
            index = len(face_styles)
            if index >= STYLE_CAPACITY:
                unstyled[EntityKind.FACE].append(f"{link.name}.{face}")
                continue
            style = style_for(index, EntityKind.FACE)
            face_styles[(link.name, face)] = style
            legend.append(LegendRow(style.token, link.name, labels[link.name], EntityKind.FACE, str(face), style))
    for link in definition.links:
        for edge in EDGES:
            index = len(edge_styles)
            if index >= STYLE_CAPACITY:
                unstyled[EntityKind.EDGE].append(f"{link.name}.{edge.tag}")
                continue
            style = style_for(index, EntityKind.EDGE)
            edge_styles[(link.name, edge)] = style
            legend.append(LegendRow(style.token, link.name, labels[link.name], EntityKind.EDGE, edge.tag, style))

    diagnostics = []
    for kind, entities in unstyled.items():
        if entities:
            links = list(dict.fromkeys(entity.split(".", 1)[0] for entity in entities))
            diagnostics.append(
                warning(
                    DiagnosticCode.STYLE_CAPACITY,
                    f"only {STYLE_CAPACITY} {kind} styles exist; {len(entities)} {kind}s of links "
                    f"{', '.join(links)} are left out of renders and cannot be referenced by token",
                    links,
                    unstyled=len(entities),
                ),
            )

    return VisualMap(
        instance_labels=labels,
        face_styles=face_styles,
        edge_styles=edge_styles,
        legend=tuple(legend),
        diagnostics=tuple(diagnostics),
        _by_token={row.token: row for row in legend},
    )


def resolve_face_token(visual_map: VisualMap | None, token: str) -> FaceRef | Diagnostic:
    """Map a face token to its FaceRef, or explain why it cannot be used."""
    row = visual_map.row(token) if visual_map is not None else None
    if row is None:
        return error(
            DiagnosticCode.UNRESOLVED_REFERENCE,
            f"style token {token!r} is not in the legend",
            [token],
        )
    if row.kind is not EntityKind.FACE:
        return error(
            DiagnosticCode.INVALID_JOINT,
            f"style token {token!r} names {row.label} (link {row.link}) edge {row.entity}; "
            "joints need a face token",
            [token, row.link],
            expected=str(EntityKind.FACE),
            actual=str(row.kind),
        )
    return FaceRef(row.link, Face(row.entity))


def resolve_visual_joint_ref(visual_map: VisualMap, token_a: str, token_b: str) -> tuple[FaceRef, FaceRef]:
    """
    Resolve the two face tokens of a joint written with visual identifiers.

    Raises:
        AssemblyError: If a token is unknown or names an edge instead of a face

    """
    refs = []
    for token in (token_a, token_b):
        result = resolve_face_token(visual_map, token)
        if isinstance(result, Diagnostic):
            raise AssemblyError(result)
        refs.append(result)
    return refs[0], refs[1]


def legend_table(visual_map: VisualMap) -> dict[str, dict[str, Any]]:
    """Token -> entity description, in legend order."""
    return {
        row.token: {
            "link": row.link,
            "label": row.label,
            "kind": str(row.kind),
            "entity": row.entity,
            "rgb": list(row.style.color),
            "texture": str(row.style.texture),
        }
        for row in visual_map.legend
    }


def legend_json(visual_map: VisualMap) -> str:
    """Canonical legend export."""
    return json.dumps(legend_table(visual_map), indent=2) + "\n"


def legend_text(visual_map: VisualMap) -> str:
    """Human/agent-readable legend, one entity per line."""
    lines = [f"{label} = link {link}" for link, label in visual_map.instance_labels.items()]
    lines.extend(f"{row.token}: {row.label} {row.kind} {row.entity}" for row in visual_map.legend)
    return "\n".join(lines) + "\n"
