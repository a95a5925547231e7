"""Sandboxed execution runner for untrusted code candidates."""

from .runner import PROTOCOL_VERSION, run_request, serve, validate_request

__all__ = ["PROTOCOL_VERSION", "run_request", "serve", "validate_request"]
