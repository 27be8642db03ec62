"""Agent harness: a chat model edits IR files and gets solver diagnostics and renders back."""

from mateforge.agent.client import ClientError, HttpChatClient, ReplayClient
from mateforge.agent.loop import Outcome, Session, SessionConfig, TaskInput, run_session

__all__ = [
    "ClientError",
    "HttpChatClient",
    "Outcome",
    "ReplayClient",
    "Session",
    "SessionConfig",
    "TaskInput",
    "run_session",
]
