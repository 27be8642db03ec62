"""Mateforge - a verifying assembly kernel for jointed box models written as JSON."""

from .core import main

__all__ = ["main"]
