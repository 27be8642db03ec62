"""
The build-verify-feedback loop.

Each iteration the builder model edits IR files through ``write_file`` (possibly over several
tool-use round-trips), the assembly is compiled and rendered, and the diagnostics, legend, and
renders go back to the model. When the assembly compiles cleanly a separate judge call
compares the renders with the task; its approval ends the session.
"""

import json
import logging
import math
import os
import re
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from mateforge.agent.client import (
    WRITE_FILE_TOOL,
    Attachment,
    ChatClient,
    ClientError,
    Message,
    ModelRequest,
    ModelResponse,
    RetryingClient,
    ToolCall,
    Usage,
)
from mateforge.agent.prompts import (
    FEEDBACK_PROMPT,
    JUDGE_PROMPT,
    REVISION_PROMPT,
    SYSTEM_PROMPT,
    TASK_PROMPT,
    image_note,
)
from mateforge.agent.sandbox import FINAL_FILE, Sandbox, SandboxError
from mateforge.compiler import CompileResult, compile_file
from mateforge.diagnostics import round_number, to_json_lines
from mateforge.ir import AssemblyDef, Link, Part, serialize_assembly
from mateforge.render import DEFAULT_CAMERAS, Camera, ViewSpec, render_compiled, render_joint_detail
from mateforge.visual import VisualMap, legend_text

logger = logging.getLogger(__name__)

UNPARSEABLE = "unparseable judgment"
_REVISE = re.compile(r"NO\s*:\s*(.+)", re.IGNORECASE | re.DOTALL)


class Outcome(StrEnum):
    """How a session ended."""

    ACCEPTED = "Accepted"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    ABORTED = "Aborted"


class _BudgetDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iterations: int = Field(default=40, ge=0)
    calls: int | None = Field(default=None, ge=0)
    usd: float | None = Field(default=None, ge=0)


class _TaskDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    images: list[str] = Field(default_factory=list)
    description: str | None = None
    budget: _BudgetDocument = Field(default_factory=_BudgetDocument)


@dataclass(frozen=True)
class TaskInput:
    """What to build, and how much the session may spend building it."""

    images: tuple[Path, ...] = ()
    description: str | None = None
    max_iterations: int = 40
    max_calls: int | None = None
    max_usd: float | None = None

    def __post_init__(self) -> None:
        """Require something to build and non-negative budgets."""
        if not self.images and not (self.description and self.description.strip()):
            msg = "A task needs at least one image or a description"
            raise ValueError(msg)
        if self.max_iterations < 0 or (self.max_calls is not None and self.max_calls < 0):
            msg = "Budgets must not be negative"
            raise ValueError(msg)
        if self.max_usd is not None and self.max_usd < 0:
            msg = "Budgets must not be negative"
            raise ValueError(msg)

    @classmethod
    def from_file(cls, path: Path) -> "TaskInput":
        """
        Load a task file: ``{"images": [...], "description": "...", "budget": {...}}``.

        Image paths are relative to the task file.

        Raises:
            ValueError: If the file is malformed or names missing images

        """
        document = _TaskDocument.model_validate_json(path.read_bytes())
        images = tuple(path.parent / image for image in document.images)
        for image in images:
            if not image.is_file():
                msg = f"Task image '{image}' not found"
                raise ValueError(msg)
        return cls(
            images,
            document.description,
            document.budget.iterations,
            document.budget.calls,
            document.budget.usd,
        )


@dataclass(frozen=True)
class Pricing:
    """Model prices in USD per million tokens."""

    input_usd_per_mtok: float = 0.0
    output_usd_per_mtok: float = 0.0

    def cost(self, usage: Usage) -> float:
        """USD cost of one call."""
        return (usage.input_tokens * self.input_usd_per_mtok + usage.output_tokens * self.output_usd_per_mtok) / 1e6

    @classmethod
    def from_env(cls) -> "Pricing":
        """Read MATEFORGE_INPUT_USD_PER_MTOK / MATEFORGE_OUTPUT_USD_PER_MTOK (default 0)."""
        load_dotenv()
        return cls(
            float(os.environ.get("MATEFORGE_INPUT_USD_PER_MTOK", "0")),
            float(os.environ.get("MATEFORGE_OUTPUT_USD_PER_MTOK", "0")),
        )


@dataclass(frozen=True)
class SessionConfig:
    """Knobs for one session. ``clock`` and ``sleep`` are injectable for replay."""

    views: tuple[Camera, ...] = DEFAULT_CAMERAS
    width: int = 800
    height: int = 600
    calls_per_iteration: int = 30
    stall_restart: int = 5
    retry_delays: tuple[float, ...] = (1.0, 2.0, 4.0)
    pricing: Pricing = field(default_factory=Pricing)
    clock: Callable[[], float] = time.monotonic
    sleep: Callable[[float], None] = time.sleep
    joint_details: bool = False
    base_dims: tuple[float, float, float] = (100.0, 100.0, 10.0)


@dataclass(frozen=True)
class IterationRecord:
    """Bookkeeping for one iteration."""

    index: int
    seconds: float
    usd: float
    input_tokens: int
    output_tokens: int
    calls: int
    diagnostics: tuple[str, ...]
    converged: bool
    renders: tuple[str, ...]
    accepted: bool
    judgment: str | None = None
    restarted: bool = False


@dataclass
class Session:
    """A finished session."""

    task: TaskInput
    iterations: list[IterationRecord]
    final: AssemblyDef | None
    outcome: Outcome
    directory: Path
    transcript: Path

    @property
    def totals(self) -> dict[str, float | int]:
        """Sums over every iteration."""
        return format_totals(
            sum(r.seconds for r in self.iterations),
            sum(r.usd for r in self.iterations),
            sum(r.input_tokens for r in self.iterations),
            sum(r.output_tokens for r in self.iterations),
            sum(r.calls for r in self.iterations),
        )


@dataclass(frozen=True)
class Judgment:
    """The judge's verdict and the reply it came from."""

    approved: bool
    reason: str
    response: ModelResponse


class Transcript:
    """JSON-lines event log; one compact, key-sorted object per line."""

    def __init__(self, path: Path) -> None:
        """Start an empty transcript at ``path``."""
        self.path = path
        path.write_text("", encoding="utf-8")

    def record(self, kind: str, **payload: Any) -> None:
        """Append one event."""
        line = json.dumps({"kind": kind, **payload}, sort_keys=True, separators=(",", ":"))
        with self.path.open("a", encoding="utf-8") as f:
            f.write(line + "\n")


@dataclass
class _Meter:
    pricing: Pricing
    calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    usd: float = 0.0

    def add(self, usage: Usage) -> None:
        self.calls += 1
        self.input_tokens += usage.input_tokens
        self.output_tokens += usage.output_tokens
        self.usd += self.pricing.cost(usage)


def parse_judgment(text: str) -> tuple[bool, str]:
    """``YES`` approves; ``NO: reason`` revises; anything else revises as unparseable."""
    reply = text.strip()
    if re.fullmatch(r"YES\.?", reply, re.IGNORECASE):
        return True, ""
    match = _REVISE.fullmatch(reply)
    if match and match.group(1).strip():
        return False, match.group(1).strip()
    return False, UNPARSEABLE


def _task_attachments(task: TaskInput) -> tuple[Attachment, ...]:
    return tuple(Attachment.from_file(image, image.name) for image in task.images)


def judge(task: TaskInput, renders: Sequence[Attachment], client: ChatClient) -> Judgment:
    """
    Ask the model, in a separate call, whether the renders match the task.

    Raises:
        ClientError: Transport failures propagate to the caller's retry policy

    """
    attachments = _task_attachments(task)
    prompt = JUDGE_PROMPT.format(
        description=task.description or "the object in the reference images",
        image_note=image_note(len(attachments)),
    )
    request = ModelRequest(messages=(Message(role="user", text=prompt, attachments=attachments + tuple(renders)),))
    response = client.complete(request)
    approved, reason = parse_judgment(response.text)
    logger.info("Judge %s%s", "approved" if approved else "asked for revision", f": {reason}" if reason else "")
    return Judgment(approved, reason, response)


def build_feedback(
    result: CompileResult,
    renders: Sequence[Attachment],
    visual_map: VisualMap | None = None,
) -> list[Message]:
    """
    Package one iteration's results for the model.

    Order is fixed: diagnostics as JSON lines, solver summary, legend, renders. Renders are
    attached whether or not the solve converged.
    """
    lines = to_json_lines(result.diagnostics)
    messages = [Message(role="user", text="Diagnostics (JSON lines):\n" + (lines or "(none)\n"))]

    outcome = result.outcome
    if outcome is None:
        summary = "Solver: not run; fix the errors above first."
    else:
        state = "converged" if outcome.converged else "did not converge"
        summary = (
            f"Solver: {state} after {outcome.iterations} iteration(s); residual {outcome.residual_norm:.3g}; "
            f"{outcome.dof} remaining degree(s) of freedom."
        )
        if outcome.joint_angles:
            angles = ", ".join(f"{name}={angle:.1f} deg" for name, angle in outcome.joint_angles.items())
            summary += f" Revolute angles: {angles}."
    messages.append(Message(role="user", text=summary))

    visual_map = visual_map or result.visual_map
    if visual_map is not None:
        messages.append(Message(role="user", text="Legend:\n" + legend_text(visual_map)))
    if renders:
        names = ", ".join(attachment.path for attachment in renders)
        messages.append(Message(role="user", text=f"Renders: {names}", attachments=tuple(renders)))
    return messages


def format_totals(seconds: float, usd: float, input_tokens: float, output_tokens: float, calls: float) -> dict[str, float | int]:
    """Telemetry numbers in fixed key order, integral values as integers."""
    return {
        "seconds": round_number(seconds, 3),
        "usd": round_number(usd, 6),
        "input_tokens": round_number(input_tokens, 3),
        "output_tokens": round_number(output_tokens, 3),
        "calls": round_number(calls, 3),
    }


def record_telemetry(session: Session) -> str:
    """JSON report with per-iteration and total time, cost, tokens, and calls."""
    iterations = []
    for record in session.iterations:
        entry = asdict(record)
        entry.update(
            format_totals(record.seconds, record.usd, record.input_tokens, record.output_tokens, record.calls),
        )
        entry["diagnostics"] = list(record.diagnostics)
        entry["renders"] = list(record.renders)
        iterations.append(entry)
    document = {
        "outcome": str(session.outcome),
        "iterations": iterations,
        "totals": session.totals,
    }
    return json.dumps(document, indent=2) + "\n"


def _initial_assembly(config: SessionConfig) -> AssemblyDef:
    base = Part("base", config.base_dims)
    return AssemblyDef((base,), (Link("base", "base", grounded=True),), ())


class _Runner:
    def __init__(
        self,
        task: TaskInput,
        client: ChatClient,
        sandbox: Sandbox,
        transcript: Transcript,
        config: SessionConfig,
    ) -> None:
        self.task = task
        self.client = client
        self.sandbox = sandbox
        self.transcript = transcript
        self.config = config
        self.calls = 0
        self.usd = 0.0
        self._recorded = 0

    def _can_call(self, meter: _Meter) -> bool:
        if self.task.max_calls is not None and self.calls + meter.calls >= self.task.max_calls:
            return False
        return self.task.max_usd is None or self.usd + meter.usd < self.task.max_usd

    def _opening(self) -> list[Message]:
        files = "\n".join(f"--- {name} ---\n{content}" for name, content in self.sandbox.ir_files().items())
        prompt = TASK_PROMPT.format(
            description=self.task.description or "the object in the attached images",
            image_note=image_note(len(self.task.images)),
            files=files,
        )
        self._recorded = 0
        return [
            Message(role="system", text=SYSTEM_PROMPT.format()),
            Message(role="user", text=prompt, attachments=_task_attachments(self.task)),
        ]

    def _complete(self, index: int, request: ModelRequest, meter: _Meter, role: str) -> ModelResponse:
        fresh = request.messages[self._recorded :] if role == "builder" else request.messages
        self.transcript.record(
            "request",
            iteration=index,
            role=role,
            messages=[message.model_dump(mode="json") for message in fresh],
        )
        if role == "builder":
            self._recorded = len(request.messages)
        response = self.client.complete(request)
        meter.add(response.usage)
        self.transcript.record("response", iteration=index, role=role, response=response.model_dump(mode="json"))
        return response

    def _apply(self, call: ToolCall) -> str:
        if call.name != WRITE_FILE_TOOL["name"]:
            return f"error: unknown tool {call.name!r}; only write_file exists"
        path = call.arguments.get("path")
        content = call.arguments.get("content")
        if not isinstance(path, str) or not isinstance(content, str):
            return "error: write_file needs string arguments 'path' and 'content'"
        try:
            self.sandbox.write_file(path, content)
        except SandboxError as e:
            return f"error: {e}"
        return f"wrote {path}"

    def _builder_turn(self, index: int, conversation: list[Message], meter: _Meter) -> None:
        for _ in range(self.config.calls_per_iteration):
            if not self._can_call(meter):
                logger.info("Call budget reached during iteration %d", index)
                return
            request = ModelRequest(messages=tuple(conversation), tools=(WRITE_FILE_TOOL,))
            response = self._complete(index, request, meter, "builder")
            actions = [f"[write_file {call.arguments.get('path', '?')}]" for call in response.tool_calls]
            conversation.append(Message(role="assistant", text="\n".join([response.text, *actions]).strip()))
            results = [self._apply(call) for call in response.tool_calls]
            if results:
                conversation.append(Message(role="user", text="\n".join(results)))
            if response.stop_reason != "tool_use":
                return

    def _verify(self, index: int) -> tuple[CompileResult, list[Attachment]]:
        result = compile_file(self.sandbox.assembly_path)
        renders: list[Attachment] = []
        if result.outcome is not None and result.definition is not None and result.visual_map is not None:
            for camera in self.config.views:
                view = ViewSpec(camera, self.config.width, self.config.height)
                document = render_compiled(result, view)
                if document is None:
                    continue
                path = self.sandbox.render_path(index, str(camera))
                path.write_text(document, encoding="utf-8")
                renders.append(Attachment.from_file(path, self.sandbox.relative(path)))
            if self.config.joint_details:
                view = ViewSpec(Camera.ISOMETRIC, self.config.width, self.config.height)
                for joint in result.definition.joints:
                    document = render_joint_detail(
                        result.definition,
                        result.poses,
                        result.visual_map,
                        joint.name,
                        view,
                        result.diagnostics,
                    )
                    path = self.sandbox.render_path(index, f"joint_{joint.name}")
                    path.write_text(document, encoding="utf-8")
                    renders.append(Attachment.from_file(path, self.sandbox.relative(path)))
        self.transcript.record(
            "diagnostics",
            iteration=index,
            converged=result.outcome is not None and result.outcome.converged,
            diagnostics=[d.to_dict() for d in result.diagnostics],
        )
        return result, renders

    def run(self) -> tuple[list[IterationRecord], Outcome, AssemblyDef | None]:
        records: list[IterationRecord] = []
        conversation = self._opening()
        feedback: list[Message] = []
        best: tuple[tuple[bool, int, float], dict[str, str], AssemblyDef | None] | None = None
        previous: tuple[str, ...] | None = None
        repeats = 0
        final: AssemblyDef | None = None

        for index in range(1, self.task.max_iterations + 1):
            meter = _Meter(self.config.pricing)
            if not self._can_call(meter):
                return records, Outcome.BUDGET_EXHAUSTED, final
            started = self.config.clock()
            if feedback:
                conversation.append(Message(role="user", text=FEEDBACK_PROMPT.format(iteration=index - 1)))
                conversation.extend(feedback)
            judgment: Judgment | None = None
            try:
                self._builder_turn(index, conversation, meter)
                result, renders = self._verify(index)
                if result.ok and self._can_call(meter):
                    judgment = judge(self.task, renders, _Recording(self, index, meter))
                    self.transcript.record("judgment", iteration=index, approved=judgment.approved, reason=judgment.reason)
            except ClientError as e:
                logger.error("Aborting session: %s", e)
                self.transcript.record("abort", iteration=index, reason=str(e))
                records.append(self._record(index, started, meter, None, [], accepted=False))
                return records, Outcome.ABORTED, final

            accepted = judgment is not None and judgment.approved
            codes = tuple(str(d.code) for d in result.diagnostics)

            # Unparsed attempts rank last, then fewer errors, then smaller residual.
            score = (
                result.definition is None,
                sum(1 for d in result.diagnostics if d.is_error),
                result.outcome.residual_norm if result.outcome is not None else math.inf,
            )
            if best is None or score < best[0]:
                best = (score, self.sandbox.ir_files(), result.definition)
            final = result.definition if accepted else best[2]

            signature = tuple(d.to_json_line() for d in result.diagnostics) + (judgment.reason if judgment else "",)
            repeats = repeats + 1 if signature == previous else 1
            previous = signature
            restarted = not accepted and repeats >= self.config.stall_restart
            records.append(
                self._record(
                    index,
                    started,
                    meter,
                    result,
                    renders,
                    accepted=accepted,
                    codes=codes,
                    judgment=judgment,
                    restarted=restarted,
                ),
            )
            if accepted:
                return records, Outcome.ACCEPTED, final

            if restarted:
                logger.info("Diagnostics unchanged for %d iterations; restarting the conversation", repeats)
                self.sandbox.restore(best[1])
                self.transcript.record("restart", iteration=index, repeats=repeats)
                conversation = self._opening()
                feedback = []
                repeats = 0
                previous = None
                continue

            feedback = build_feedback(result, renders)
            if judgment is not None:
                feedback.append(Message(role="user", text=REVISION_PROMPT.format(reason=judgment.reason)))
        return records, Outcome.BUDGET_EXHAUSTED, final

    def _record(  # noqa: PLR0913
        self,
        index: int,
        started: float,
        meter: _Meter,
        result: CompileResult | None,
        renders: Sequence[Attachment],
        *,
        accepted: bool,
        codes: tuple[str, ...] = (),
        judgment: Judgment | None = None,
        restarted: bool = False,
    ) -> IterationRecord:
        self.calls += meter.calls
        self.usd += meter.usd
        return IterationRecord(
            index=index,
            seconds=self.config.clock() - started,
            usd=meter.usd,
            input_tokens=meter.input_tokens,
            output_tokens=meter.output_tokens,
            calls=meter.calls,
            diagnostics=codes,
            converged=result is not None and result.outcome is not None and result.outcome.converged,
            renders=tuple(attachment.path for attachment in renders),
            accepted=accepted,
            judgment=None if judgment is None else ("YES" if judgment.approved else judgment.reason),
            restarted=restarted,
        )


class _Recording:
    """Routes judge calls through the session's transcript and meter."""

    def __init__(self, runner: _Runner, index: int, meter: _Meter) -> None:
        self.runner = runner
        self.index = index
        self.meter = meter

    def complete(self, request: ModelRequest) -> ModelResponse:
        return self.runner._complete(self.index, request, self.meter, "judge")  # noqa: SLF001


def run_session(
    task: TaskInput,
    client: ChatClient,
    directory: Path,
    config: SessionConfig | None = None,
) -> Session:
    """
    Run the loop until the judge approves a clean assembly, a budget runs out, or the
    client fails for good.

    The session directory receives the IR files, renders, ``transcript.jsonl``,
    ``telemetry.json``, and ``final.asm.json``.
    """
    config = config or SessionConfig()
    sandbox = Sandbox(directory)
    sandbox.prepare()
    sandbox.clear()
    sandbox.write_file("assembly.asm.json", serialize_assembly(_initial_assembly(config)))
    transcript = Transcript(sandbox.transcript_path)

    retrying = RetryingClient(client, config.retry_delays, config.sleep)
    runner = _Runner(task, retrying, sandbox, transcript, config)
    records, outcome, final = runner.run()

    if final is not None:
        (directory / FINAL_FILE).write_text(serialize_assembly(final), encoding="utf-8")
    session = Session(task, records, final, outcome, directory, sandbox.transcript_path)
    sandbox.telemetry_path.write_text(record_telemetry(session), encoding="utf-8")
    logger.info("Session finished: %s after %d iteration(s)", outcome, len(records))
    return session
