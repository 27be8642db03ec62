"""STL and OBJ export of a posed assembly through trimesh, one named body per link."""

import logging
from collections.abc import Mapping
from enum import StrEnum
from pathlib import Path

import numpy as np
import trimesh

from mateforge.ir import AssemblyDef
from mateforge.kinematics import Pose, quat_to_matrix

logger = logging.getLogger(__name__)


class MeshFormat(StrEnum):
    """Supported mesh file formats."""

    STL = "stl"
    OBJ = "obj"


def link_mesh(definition: AssemblyDef, link: str, pose: Pose) -> trimesh.Trimesh:
    """Triangulated box of a link placed at ``pose``, named after the link."""
    transform = np.eye(4)
    transform[:3, :3] = quat_to_matrix(pose.orientation)
    transform[:3, 3] = pose.position
    mesh = trimesh.creation.box(extents=definition.part_of(link).dims, transform=transform)
    mesh.metadata["name"] = link
    return mesh


def assembly_scene(definition: AssemblyDef, poses: Mapping[str, Pose]) -> trimesh.Scene:
    """Scene with one geometry and node per link, keyed by link name, in link order."""
    scene = trimesh.Scene()
    for name in definition.link_names:
        scene.add_geometry(link_mesh(definition, name, poses[name]), node_name=name, geom_name=name)
    return scene


def _named_solid(mesh: trimesh.Trimesh, name: str) -> str:
    # export_stl_ascii writes an anonymous solid; only the header and footer are renamed.
    lines = trimesh.exchange.stl.export_stl_ascii(mesh).strip().splitlines()
    body = [line for line in lines if not line.lstrip().startswith(("solid", "endsolid"))]
    return "\n".join([f"solid {name}", *body, f"endsolid {name}"])


def export_stl(definition: AssemblyDef, poses: Mapping[str, Pose]) -> str:
    """ASCII STL text with one ``solid`` block per link, in link order."""
    solids = [_named_solid(link_mesh(definition, name, poses[name]), name) for name in definition.link_names]
    return "\n".join(solids) + "\n"


def export_obj(definition: AssemblyDef, poses: Mapping[str, Pose]) -> str:
    """Wavefront OBJ text with one object per link."""
    exported = assembly_scene(definition, poses).export(file_type="obj")
    return exported.decode("utf-8") if isinstance(exported, bytes) else str(exported)


def write_mesh(definition: AssemblyDef, poses: Mapping[str, Pose], path: Path, mesh_format: MeshFormat) -> Path:
    """Write the assembly mesh to ``path`` in the given format."""
    text = export_stl(definition, poses) if mesh_format is MeshFormat.STL else export_obj(definition, poses)
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s mesh for %d links to %s", mesh_format, len(definition.links), path)
    return path
