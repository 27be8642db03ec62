"""
Chat-model clients.

The wire contract is deliberately small: a request is a list of role-tagged messages with
optional file attachments plus the tool schema; a response is text, zero or more
``write_file`` tool calls, a stop reason, and token usage. ``HttpChatClient`` speaks it
over HTTP with a JSON body; ``ReplayClient`` serves scripted responses for tests and for
replaying recorded transcripts.
"""

import base64
import hashlib
import json
import logging
import mimetypes
import os
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, Literal, Protocol

import requests
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

logger = logging.getLogger(__name__)

ENDPOINT_VARIABLE = "MATEFORGE_API_ENDPOINT"
KEY_VARIABLE = "MATEFORGE_API_KEY"
MODEL_VARIABLE = "MATEFORGE_MODEL"


class ClientError(RuntimeError):
    """A model call failed in transport or returned something unusable."""


class Attachment(BaseModel):
    """A file sent alongside a message, recorded by path and content hash."""

    model_config = ConfigDict(frozen=True)

    path: str
    media_type: str
    sha256: str
    location: Path | None = Field(default=None, exclude=True)

    @classmethod
    def from_file(cls, location: Path, display_path: str | None = None) -> "Attachment":
        """Hash a file on disk; ``display_path`` is what transcripts record."""
        digest = hashlib.sha256(location.read_bytes()).hexdigest()
        media_type = mimetypes.guess_type(location.name)[0] or "application/octet-stream"
        if location.name.endswith(".svg"):
            media_type = "image/svg+xml"
        return cls(path=display_path or location.name, media_type=media_type, sha256=digest, location=location)


class Message(BaseModel):
    """One role-tagged message."""

    model_config = ConfigDict(frozen=True)

    role: Literal["system", "user", "assistant"]
    text: str = ""
    attachments: tuple[Attachment, ...] = ()


class ToolCall(BaseModel):
    """A tool invocation requested by the model."""

    model_config = ConfigDict(frozen=True)

    id: str = ""
    name: str
    arguments: dict[str, Any] = Field(default_factory=dict)


class Usage(BaseModel):
    """Token counts for one call."""

    model_config = ConfigDict(frozen=True)

    input_tokens: int = Field(default=0, ge=0)
    output_tokens: int = Field(default=0, ge=0)


class ModelRequest(BaseModel):
    """Everything sent to the model for one call."""

    messages: tuple[Message, ...] = Field(min_length=1)
    tools: tuple[dict[str, Any], ...] = ()
    temperature: float = 0.0


class ModelResponse(BaseModel):
    """What came back from one call."""

    text: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    stop_reason: Literal["tool_use", "end_turn"] = "end_turn"
    usage: Usage = Field(default_factory=Usage)


WRITE_FILE_TOOL: dict[str, Any] = {
    "name": "write_file",
    "description": (
        "Create or overwrite a part file (*.part.json) or the assembly file (assembly.asm.json) "
        "inside the session directory. Paths are relative to the session directory."
    ),
    "input_schema": {
        "type": "object",
        "properties": {
            "path": {"type": "string"},
            "content": {"type": "string"},
        },
        "required": ["path", "content"],
    },
}


class ChatClient(Protocol):
    """Anything that can answer a ModelRequest."""

    def complete(self, request: ModelRequest) -> ModelResponse:
        """Send one request and return the parsed reply."""
        ...


def _wire_body(request: ModelRequest, model: str) -> dict[str, Any]:
    body = request.model_dump(mode="json")
    body["model"] = model
    for message, wire in zip(request.messages, body["messages"], strict=True):
        for attachment, wire_attachment in zip(message.attachments, wire["attachments"], strict=True):
            if attachment.location is not None:
                wire_attachment["data"] = base64.b64encode(attachment.location.read_bytes()).decode("ascii")
    return body


class HttpChatClient:
    """JSON-over-HTTP chat adapter."""

    def __init__(self, endpoint: str, api_key: str | None, model: str, timeout: float = 120.0) -> None:
        """Configure the endpoint; the key is only ever sent as a request header."""
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self._api_key = api_key
        self._session = requests.Session()

    @classmethod
    def from_env(cls) -> "HttpChatClient":
        """
        Build a client from environment variables (``.env`` files are honored).

        Raises:
            ClientError: If no endpoint is configured

        """
        load_dotenv()
        endpoint = os.environ.get(ENDPOINT_VARIABLE)
        if not endpoint:
            msg = f"Set {ENDPOINT_VARIABLE} (and usually {KEY_VARIABLE}) to use a model"
            raise ClientError(msg)
        return cls(endpoint, os.environ.get(KEY_VARIABLE), os.environ.get(MODEL_VARIABLE, "default"))

    def complete(self, request: ModelRequest) -> ModelResponse:
        """POST the request and validate the reply."""
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            response = self._session.post(
                self.endpoint,
                data=json.dumps(_wire_body(request, self.model)),
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            return ModelResponse.model_validate(response.json())
        except requests.RequestException as e:
            msg = f"Model request failed: {e}"
            raise ClientError(msg) from e
        except (ValidationError, ValueError) as e:
            msg = f"Model reply was not a valid response: {e}"
            raise ClientError(msg) from e


class ReplayClient:
    """Serves a fixed sequence of responses, in order, and remembers the requests."""

    def __init__(self, responses: Sequence[ModelResponse | str]) -> None:
        """Plain strings are shorthand for text-only ``end_turn`` replies."""
        self._responses = [
            ModelResponse(text=item) if isinstance(item, str) else item for item in responses
        ]
        self._position = 0
        self.requests: list[ModelRequest] = []

    @classmethod
    def from_transcript(cls, path: Path) -> "ReplayClient":
        """Replay the ``response`` events of a recorded transcript."""
        responses = []
        with path.open(encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event.get("kind") == "response":
                    responses.append(ModelResponse.model_validate(event["response"]))
        logger.info("Loaded %d recorded responses from %s", len(responses), path)
        return cls(responses)

    @property
    def remaining(self) -> int:
        """Responses not yet served."""
        return len(self._responses) - self._position

    def complete(self, request: ModelRequest) -> ModelResponse:
        """Return the next scripted response."""
        self.requests.append(request)
        if self._position >= len(self._responses):
            msg = "Replay exhausted: no scripted response left"
            raise ClientError(msg)
        response = self._responses[self._position]
        self._position += 1
        return response


class RetryingClient:
    """Retries transport failures with a fixed, deterministic backoff."""

    def __init__(
        self,
        inner: ChatClient,
        delays: Sequence[float] = (1.0, 2.0, 4.0),
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        """Wrap ``inner``; one attempt plus one retry per delay."""
        self.inner = inner
        self.delays = tuple(delays)
        self._sleep = sleep

    def complete(self, request: ModelRequest) -> ModelResponse:
        """Call the inner client, retrying ClientError after each delay."""
        for delay in self.delays:
            try:
                return self.inner.complete(request)
            except ClientError as e:
                logger.warning("Model call failed (%s); retrying in %.1fs", e, delay)
                self._sleep(delay)
        return self.inner.complete(request)
