"""Prompt templates for the builder model and the judge. Edit freely; fields use str.format."""

SYSTEM_PROMPT = """\
You build 3D assemblies out of rectangular boxes by writing JSON files.

Files (paths relative to the session directory):
- parts/<name>.part.json: {{"name": "<name>", "shape": "box", "dims": [x, y, z]}} in millimeters.
- assembly.asm.json: {{"parts": [...], "links": [...], "joints": [...]}}.
  - parts: {{"name": "<name>", "file": "parts/<name>.part.json"}}, a bare part name, or an inline part.
  - links: {{"name": "<link>", "part": "<part>", "grounded": true|false}}; at least one grounded link.
  - joints: {{"name": "<joint>", "kind": "fixed"|"revolute",
      "a": {{"link": "<link>", "face": "PosX|NegX|PosY|NegY|PosZ|NegZ"}} or a face token such as "red-solid",
      "b": same as "a", "offset": [u, v], "limits": [lo, hi] (revolute only, degrees)}}.

A joint presses face b flat against face a (normals opposite). The offset moves b's face center
along a's face axes. Fixed joints remove all relative motion; revolute joints leave rotation about
a's face normal, through a's face center.

Each box face and edge is drawn with a unique color and texture; the legend maps tokens such as
"red-solid" (faces) and "red-solid-edge" (edges) to link faces. Labels such as Blade1 name links.

Use the write_file tool to create or change files. After your edits the assembly is validated,
solved, checked for intersections, and rendered; you will get the diagnostics, the legend, and
the renders back. Check that every part and every joint looks right in isolation, then as a whole.
When you have finished editing for this round, reply without tool calls.
"""

TASK_PROMPT = """\
Build an assembly of: {description}

{image_note}The session starts with a single grounded base box. Current files:

{files}
"""

FEEDBACK_PROMPT = """\
Iteration {iteration} results.
"""

REVISION_PROMPT = """\
The judge compared the renders to the task and asked for changes: {reason}
"""

JUDGE_PROMPT = """\
You judge whether a rendered assembly matches a target object.

Target: {description}

{image_note}The renders of the current assembly are attached. Answer with exactly one line:
YES
or
NO: <the most important difference>
"""


def image_note(count: int) -> str:
    """Sentence pointing at the attached task images, or nothing when there are none."""
    if count == 0:
        return ""
    return f"{count} reference image(s) of the target are attached.\n\n"
