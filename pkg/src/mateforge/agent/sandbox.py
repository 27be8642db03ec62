"""Session directory layout and the agent's only action: writing IR files."""

import logging
from pathlib import Path, PurePosixPath

from mateforge.ir import ASSEMBLY_SUFFIX, PART_SUFFIX

logger = logging.getLogger(__name__)

ASSEMBLY_FILE = "assembly.asm.json"
PARTS_DIR = "parts"
RENDERS_DIR = "renders"
TRANSCRIPT_FILE = "transcript.jsonl"
TELEMETRY_FILE = "telemetry.json"
FINAL_FILE = "final.asm.json"
MAX_FILE_BYTES = 1_000_000


class SandboxError(ValueError):
    """A write the agent is not allowed to make."""


class Sandbox:
    """
    One session's working directory.

    Layout::

        <root>/assembly.asm.json
        <root>/parts/*.part.json
        <root>/renders/iter<k>_<view>.svg
        <root>/transcript.jsonl
        <root>/telemetry.json
    """

    def __init__(self, root: Path) -> None:
        """Bind to ``root``; nothing is created until ``prepare``."""
        self.root = root
        self._written: set[str] = set()

    @property
    def assembly_path(self) -> Path:
        """The assembly file the loop compiles."""
        return self.root / ASSEMBLY_FILE

    @property
    def renders_dir(self) -> Path:
        """Where per-iteration renders go."""
        return self.root / RENDERS_DIR

    @property
    def transcript_path(self) -> Path:
        """JSON-lines event log."""
        return self.root / TRANSCRIPT_FILE

    @property
    def telemetry_path(self) -> Path:
        """Telemetry report."""
        return self.root / TELEMETRY_FILE

    def prepare(self) -> None:
        """Create the directory tree."""
        (self.root / PARTS_DIR).mkdir(parents=True, exist_ok=True)
        self.renders_dir.mkdir(parents=True, exist_ok=True)

    def clear(self) -> None:
        """Remove IR files an earlier session left in this layout: the assembly and top-level part files."""
        for path in (self.assembly_path, *sorted((self.root / PARTS_DIR).glob(f"*{PART_SUFFIX}"))):
            if path.is_file():
                logger.debug("Removing stale %s", self.relative(path))
                path.unlink()

    def render_path(self, iteration: int, view: str, suffix: str = "") -> Path:
        """File for one rendered view of one iteration."""
        return self.renders_dir / f"iter{iteration}_{view}{suffix}.svg"

    def relative(self, path: Path) -> str:
        """Path relative to the sandbox root, POSIX style, for transcripts and prompts."""
        return path.relative_to(self.root).as_posix()

    def _target(self, path: str) -> Path:
        relative = PurePosixPath(path.replace("\\", "/"))
        if relative.is_absolute() or ".." in relative.parts or not relative.parts:
            msg = f"path {path!r} must be relative to the session directory without '..'"
            raise SandboxError(msg)
        if not (relative.name.endswith(PART_SUFFIX) or relative.name.endswith(ASSEMBLY_SUFFIX)):
            msg = f"path {path!r} must end in {PART_SUFFIX} or {ASSEMBLY_SUFFIX}"
            raise SandboxError(msg)
        if relative.as_posix() == FINAL_FILE:
            msg = f"path {path!r} is reserved for the session result"
            raise SandboxError(msg)
        target = (self.root / relative).resolve()
        if not target.is_relative_to(self.root.resolve()):
            msg = f"path {path!r} escapes the session directory"
            raise SandboxError(msg)
        return target

    def write_file(self, path: str, content: str) -> Path:
        """
        Write an IR file on the agent's behalf.

        Raises:
            SandboxError: If the path is outside the sandbox, has the wrong suffix, or the
                content is too large

        """
        target = self._target(path)
        if len(content.encode("utf-8")) > MAX_FILE_BYTES:
            msg = f"{path!r} is larger than {MAX_FILE_BYTES} bytes"
            raise SandboxError(msg)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
        self._written.add(target.relative_to(self.root.resolve()).as_posix())
        logger.debug("Agent wrote %s (%d chars)", path, len(content))
        return target

    def ir_files(self) -> dict[str, str]:
        """The session's IR files (the assembly plus whatever it wrote), relative path to content."""
        files = {}
        for name in sorted({ASSEMBLY_FILE, *self._written}):
            path = self.root / name
            if path.is_file():
                files[name] = path.read_text(encoding="utf-8")
        return files

    def restore(self, snapshot: dict[str, str]) -> None:
        """Make the session's IR files exactly ``snapshot``; files it did not write are left alone."""
        for name in self.ir_files():
            if name not in snapshot:
                (self.root / name).unlink()
                self._written.discard(name)
        for name, content in snapshot.items():
            self.write_file(name, content)
