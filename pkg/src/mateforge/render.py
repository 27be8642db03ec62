"""
Deterministic SVG renderer for posed box assemblies.

Parallel projection, back-face culling per box, painter's ordering by face-centroid depth.
Faces are filled with their style color plus a texture overlay, edges are stroked with
their style's dash pattern, each link gets its label at the projected center, and a legend
of every token sits below the drawing. Coordinates are written with three decimals, so
identical inputs give identical bytes.
"""

import logging
import math
from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from mateforge.compiler import CompileResult, compile_assembly
from mateforge.diagnostics import Diagnostic, DiagnosticCode, error, has_errors
from mateforge.ir import AssemblyDef, JointKind
from mateforge.kinematics import (
    EDGES,
    FACES,
    EdgeId,
    Face,
    Pose,
    edge_endpoints,
    face_frame,
    face_vertices,
    prism_corners,
    quat_to_matrix,
)
from mateforge.visual import EntityKind, Style, Texture, VisualMap

logger = logging.getLogger(__name__)

MARGIN = 24.0
BANNER_HEIGHT = 28.0
FACE_OPACITY = 0.55
EDGE_WIDTH = 1.6
LABEL_CLEARANCE = 12.0
LEGEND_COLUMNS = 4
LEGEND_ROW_HEIGHT = 14.0
LEGEND_HEADER = 22.0
VISIBILITY_EPSILON = 1e-9

DASH_ARRAYS: dict[Texture, str | None] = {
    Texture.SOLID: None,
    Texture.DASHED: "6 3",
    Texture.DOTTED: "1.5 2.5",
    Texture.DASH_DOT: "6 2 1.5 2",
}

# Face overlay patterns, one per non-solid texture.
_PATTERNS = (
    '<pattern id="tex-dashed" width="8" height="8" patternUnits="userSpaceOnUse">'
    '<path d="M0,8 L8,0" stroke="#000000" stroke-opacity="0.35" stroke-width="1"/></pattern>',
    '<pattern id="tex-dotted" width="6" height="6" patternUnits="userSpaceOnUse">'
    '<circle cx="3" cy="3" r="1" fill="#000000" fill-opacity="0.35"/></pattern>',
    '<pattern id="tex-dashdot" width="10" height="10" patternUnits="userSpaceOnUse">'
    '<path d="M0,10 L10,0" stroke="#000000" stroke-opacity="0.35" stroke-width="1"/>'
    '<circle cx="2" cy="2" r="0.9" fill="#000000" fill-opacity="0.35"/></pattern>',
)


class Camera(StrEnum):
    """Fixed orthographic cameras."""

    FRONT = "front"
    TOP = "top"
    RIGHT = "right"
    ISOMETRIC = "iso"


DEFAULT_CAMERAS: tuple[Camera, ...] = (Camera.FRONT, Camera.TOP, Camera.RIGHT, Camera.ISOMETRIC)


@dataclass(frozen=True)
class Projection:
    """Screen basis of a camera: right, up, and the direction toward the viewer."""

    right: np.ndarray
    up: np.ndarray
    toward: np.ndarray

    @classmethod
    def for_camera(cls, camera: Camera) -> "Projection":
        """Basis for one of the fixed cameras."""
        match camera:
            case Camera.FRONT:
                toward, up = np.array([0.0, -1.0, 0.0]), np.array([0.0, 0.0, 1.0])
            case Camera.TOP:
                toward, up = np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0])
            case Camera.RIGHT:
                toward, up = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
            case Camera.ISOMETRIC:
                toward = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
                z = np.array([0.0, 0.0, 1.0])
                up = z - (z @ toward) * toward
                up = up / np.linalg.norm(up)
        return cls(np.cross(up, toward), up, toward)

    def screen(self, points: np.ndarray) -> np.ndarray:
        """World points (n, 3) to screen-plane coordinates (n, 2), y up."""
        return np.column_stack([points @ self.right, points @ self.up])


@dataclass(frozen=True)
class ViewSpec:
    """Camera, image size in pixels, and revolute angle overrides in degrees."""

    camera: Camera = Camera.ISOMETRIC
    width: int = 800
    height: int = 600
    angle_overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Reject non-positive image sizes."""
        if self.width <= 0 or self.height <= 0:
            msg = f"Image size must be positive, got {self.width}x{self.height}"
            raise ValueError(msg)


def _fmt(value: float) -> str:
    text = f"{value:.3f}"
    return "0.000" if text == "-0.000" else text


def _points(points: Sequence[tuple[float, float]]) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)


@dataclass(frozen=True)
class _Viewport:
    scale: float
    center: tuple[float, float]
    origin: tuple[float, float]

    def map(self, xy: np.ndarray) -> tuple[float, float]:
        # SVG y grows downward.
        return (
            self.origin[0] + (float(xy[0]) - self.center[0]) * self.scale,
            self.origin[1] - (float(xy[1]) - self.center[1]) * self.scale,
        )


def _viewport(screen_points: np.ndarray, view: ViewSpec, top: float) -> _Viewport:
    area_w = view.width - 2 * MARGIN
    area_h = view.height - top - MARGIN
    origin = (view.width / 2.0, top + area_h / 2.0)
    if screen_points.size == 0:
        return _Viewport(1.0, (0.0, 0.0), origin)
    low = screen_points.min(axis=0)
    high = screen_points.max(axis=0)
    extent = np.maximum(high - low, 1e-9)
    scale = float(min(area_w / extent[0], area_h / extent[1]))
    center = 0.5 * (low + high)
    return _Viewport(scale, (float(center[0]), float(center[1])), origin)


@dataclass(frozen=True)
class _VisibleFace:
    depth: float
    link_index: int
    face_index: int
    link: str
    face: Face


def _face_fill(style: Style) -> list[str]:
    fills = [f'fill="{style.hex}" fill-opacity="{FACE_OPACITY}"']
    if style.texture is not Texture.SOLID:
        fills.append(f'fill="url(#tex-{style.texture})"')
    return fills


def _edge_stroke(style: Style) -> str:
    attrs = f'stroke="{style.hex}" stroke-width="{EDGE_WIDTH}"'
    dash = DASH_ARRAYS[style.texture]
    if dash is not None:
        attrs += f' stroke-dasharray="{dash}"'
    return attrs


def _place_labels(anchors: list[tuple[str, tuple[float, float]]]) -> list[tuple[str, tuple[float, float]]]:
    placed: list[tuple[str, tuple[float, float]]] = []
    for text, (x, y) in anchors:
        candidate = (x, y)
        step = 0
        while any(math.dist(candidate, other) < LABEL_CLEARANCE for _, other in placed) and step < 48:  # noqa: PLR2004
            step += 1
            radius = LABEL_CLEARANCE * (1 + step // 6)
            angle = math.radians(60.0 * step)
            candidate = (x + radius * math.cos(angle), y - radius * math.sin(angle))
        placed.append((text, candidate))
    return placed


def _legend(visual_map: VisualMap, links: Collection[str], width: int, top: float) -> tuple[list[str], float]:
    rows = [row for row in visual_map.legend if row.link in links]
    column_width = width / LEGEND_COLUMNS
    out = [
        '<g id="legend" font-family="monospace" font-size="9">',
        f'<text x="{_fmt(MARGIN)}" y="{_fmt(top + 14)}" font-size="11">Legend</text>',
    ]
    for index, row in enumerate(rows):
        x = (index % LEGEND_COLUMNS) * column_width + 8
        y = top + LEGEND_HEADER + (index // LEGEND_COLUMNS) * LEGEND_ROW_HEIGHT
        if row.kind is EntityKind.FACE:
            for fill in _face_fill(row.style):
                out.append(f'<rect x="{_fmt(x)}" y="{_fmt(y - 8)}" width="10" height="10" {fill}/>')
        else:
            out.append(
                f'<line x1="{_fmt(x)}" y1="{_fmt(y - 3)}" x2="{_fmt(x + 10)}" y2="{_fmt(y - 3)}" '
                f"{_edge_stroke(row.style)}/>",
            )
        out.append(f'<text x="{_fmt(x + 14)}" y="{_fmt(y)}">{escape(f"{row.token} {row.label}.{row.entity}")}</text>')
    out.append("</g>")
    rows_needed = math.ceil(len(rows) / LEGEND_COLUMNS)
    return out, LEGEND_HEADER + rows_needed * LEGEND_ROW_HEIGHT + 8


def _banner(diagnostics: Sequence[Diagnostic], width: int) -> list[str]:
    codes = list(dict.fromkeys(str(d.code) for d in diagnostics if d.is_error))
    text = f"SOLVE FAILED: {', '.join(codes)}"
    first = next(d for d in diagnostics if d.is_error)
    return [
        '<g id="failure-banner">',
        f'<rect x="0" y="0" width="{width}" height="{_fmt(BANNER_HEIGHT)}" fill="#b00020"/>',
        f'<text x="8" y="18" font-family="sans-serif" font-size="13" fill="#ffffff">{escape(text)}</text>',
        f"<desc>{escape(first.message)}</desc>",
        "</g>",
    ]


def render_view(  # noqa: PLR0913, PLR0915
    definition: AssemblyDef,
    poses: Mapping[str, Pose],
    visual_map: VisualMap,
    view: ViewSpec,
    diagnostics: Sequence[Diagnostic] = (),
    links: Collection[str] | None = None,
) -> str:
    """
    Render one view as an SVG 1.1 document.

    Args:
        definition: The assembly being drawn
        poses: Link poses, best-effort poses included
        visual_map: Labels and styles from assign_visual_ids
        view: Camera and image size
        diagnostics: When any is an Error, a failure banner is drawn on top
        links: Optional subset of links to draw (defaults to every posed link)

    Returns:
        The SVG document text

    """
    projection = Projection.for_camera(view.camera)
    drawn = [
        (index, link)
        for index, link in enumerate(definition.links)
        if link.name in poses and (links is None or link.name in links)
    ]
    failed = has_errors(diagnostics)
    top = MARGIN + (BANNER_HEIGHT if failed else 0.0)

    world: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    corners = []
    for _, link in drawn:
        pose = poses[link.name]
        rotation = quat_to_matrix(pose.orientation)
        position = np.asarray(pose.position, dtype=float)
        world[link.name] = (rotation, position)
        corners.append(prism_corners(definition.part(link.part), pose))
    screen_corners = projection.screen(np.vstack(corners)) if corners else np.zeros((0, 2))
    viewport = _viewport(screen_corners, view, top)

    visible: list[_VisibleFace] = []
    for link_index, link in drawn:
        rotation, position = world[link.name]
        part = definition.part(link.part)
        for face_index, face in enumerate(FACES):
            frame = face_frame(part, face)
            normal = rotation @ np.asarray(frame.normal)
            if float(normal @ projection.toward) <= VISIBILITY_EPSILON:
                continue
            centroid = rotation @ np.asarray(frame.origin) + position
            visible.append(_VisibleFace(float(centroid @ projection.toward), link_index, face_index, link.name, face))
    visible.sort(key=lambda f: (f.depth, f.link_index, f.face_index))

    # Each edge is drawn right after the nearest visible face it bounds.
    order = {(f.link, f.face): position for position, f in enumerate(visible)}
    edges_after: dict[int, list[tuple[str, EdgeId]]] = {}
    for _, link in drawn:
        for edge in EDGES:
            slots = [order[(link.name, face)] for face in edge if (link.name, face) in order]
            if slots:
                edges_after.setdefault(max(slots), []).append((link.name, edge))

    labels = visual_map.instance_labels
    body: list[str] = ['<g id="geometry" stroke-linejoin="round" stroke-linecap="round">']
    for slot, entry in enumerate(visible):
        rotation, position = world[entry.link]
        part = definition.part(definition.link(entry.link).part)
        vertices = face_vertices(part, entry.face) @ rotation.T + position
        polygon = _points([viewport.map(p) for p in projection.screen(vertices)])
        style = visual_map.face_styles.get((entry.link, entry.face))
        if style is not None:
            element_id = f"{labels.get(entry.link, entry.link)}-{entry.face}"
            fills = _face_fill(style)
            body.append(
                f"<polygon id={quoteattr(element_id)} data-token={quoteattr(style.token)} "
                f'points="{polygon}" {fills[0]} stroke="none"/>',
            )
            body.extend(f'<polygon points="{polygon}" {fill} stroke="none"/>' for fill in fills[1:])
        for link_name, edge in sorted(
            edges_after.get(slot, []),
            key=lambda e: (definition.link_names.index(e[0]), EDGES.index(e[1])),
        ):
            edge_style = visual_map.edge_styles.get((link_name, edge))
            if edge_style is None:
                continue
            rotation_e, position_e = world[link_name]
            part_e = definition.part(definition.link(link_name).part)
            ends = edge_endpoints(part_e, edge) @ rotation_e.T + position_e
            (x1, y1), (x2, y2) = (viewport.map(p) for p in projection.screen(ends))
            edge_id = f"{labels.get(link_name, link_name)}-{edge.tag}"
            body.append(
                f"<line id={quoteattr(edge_id)} data-token={quoteattr(edge_style.token)} "
                f'x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" {_edge_stroke(edge_style)}/>',
            )
    body.append("</g>")

    anchors = [
        (labels.get(link.name, link.name), viewport.map(projection.screen(world[link.name][1][None, :])[0]))
        for _, link in drawn
    ]
    body.append(
        '<g id="labels" font-family="sans-serif" font-size="12" text-anchor="middle" '
        'stroke="#ffffff" stroke-width="3" paint-order="stroke" fill="#000000">',
    )
    for text, (x, y) in _place_labels(anchors):
        body.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}">{escape(text)}</text>')
    body.append("</g>")

    legend, legend_height = _legend(visual_map, {link.name for _, link in drawn}, view.width, float(view.height))
    total_height = view.height + legend_height

    document = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{view.width}" '
        f'height="{_fmt(total_height)}" viewBox="0 0 {view.width} {_fmt(total_height)}">',
        f"<title>{escape(f'{view.camera} view')}</title>",
        "<defs>",
        *_PATTERNS,
        "</defs>",
        f'<rect x="0" y="0" width="{view.width}" height="{_fmt(total_height)}" fill="#ffffff"/>',
        *body,
        *legend,
    ]
    if failed:
        document.extend(_banner(diagnostics, view.width))
    document.append("</svg>")
    logger.debug("Rendered %s view: %d faces, %d links", view.camera, len(visible), len(drawn))
    return "\n".join(document) + "\n"


def render_joint_detail(
    definition: AssemblyDef,
    poses: Mapping[str, Pose],
    visual_map: VisualMap,
    joint: str,
    view: ViewSpec,
    diagnostics: Sequence[Diagnostic] = (),
) -> str:
    """Render only the two links of one joint, for checking a mate in isolation."""
    return render_view(definition, poses, visual_map, view, diagnostics, links=definition.joint(joint).links)


def solve_for_view(definition: AssemblyDef, view: ViewSpec) -> CompileResult:
    """Compile the assembly with the view's joint angle overrides pinned."""
    return compile_assembly(definition, view.angle_overrides)


def render_compiled(result: CompileResult, view: ViewSpec) -> str | None:
    """Render a compile result's best-effort poses, or None when nothing was solved."""
    if result.definition is None or result.visual_map is None or result.outcome is None:
        return None
    return render_view(result.definition, result.poses, result.visual_map, view, result.diagnostics)


@dataclass(frozen=True)
class SweepFrame:
    """One rendered angle of an articulation sweep."""

    angle: float
    document: str
    diagnostics: tuple[Diagnostic, ...]


@dataclass(frozen=True)
class Sweep:
    """Frames in input angle order plus diagnostics for skipped angles."""

    frames: tuple[SweepFrame, ...]
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def documents(self) -> list[str]:
        """SVG documents in frame order."""
        return [frame.document for frame in self.frames]


def render_sweep(definition: AssemblyDef, joint: str, angles: Sequence[float], view: ViewSpec) -> Sweep:
    """
    Pin ``joint`` at each angle (degrees), solve, and render.

    Angles outside the joint's limits are skipped and reported; frames that fail to
    converge are still rendered with a failure banner. An unknown or non-revolute joint,
    or an assembly that does not validate, yields no frames.
    """
    try:
        target = definition.joint(joint)
    except KeyError:
        return Sweep((), (error(DiagnosticCode.UNRESOLVED_REFERENCE, f"cannot sweep unknown joint {joint!r}", [joint]),))
    if target.kind is not JointKind.REVOLUTE:
        return Sweep(
            (),
            (
                error(
                    DiagnosticCode.INVALID_JOINT,
                    f"cannot sweep joint {joint!r}: it is {target.kind}, only revolute joints rotate",
                    [joint],
                ),
            ),
        )

    frames: list[SweepFrame] = []
    skipped: list[Diagnostic] = []
    for angle in angles:
        frame_view = replace(view, angle_overrides={**view.angle_overrides, joint: angle})
        result = solve_for_view(definition, frame_view)
        if result.system is None:
            return Sweep((), result.diagnostics)
        document = render_compiled(result, view)
        if document is None:
            logger.info("Skipping sweep frame at %g deg", angle)
            skipped.extend(
                replace(d, message=f"frame at {angle:g} deg skipped: {d.message}", data={**d.data, "frame_angle": angle})
                for d in result.diagnostics
            )
            continue
        frames.append(SweepFrame(angle, document, result.diagnostics))
    return Sweep(tuple(frames), tuple(skipped))
