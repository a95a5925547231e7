"""Client for the sandboxed execution runner.

The runner is a separate process speaking one JSON object per line on its
standard streams: a handshake announcing protocol version "1", then one
response line per request line. The client respawns the runner if it dies
and serializes requests, since the runner answers them one at a time.
"""

from __future__ import annotations

import json
import logging
import os
import select
import subprocess
import threading
import time
from typing import Sequence

from .candidates import Candidate, Task
from .errors import ProtocolError
from .evaluation import ExecOutcome

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"


class RunnerClient:
    """Spawn and talk to an execution-runner process."""

    def __init__(self, command: Sequence[str], read_grace_s: float = 10.0):
        self._command = list(command)
        self._read_grace_s = read_grace_s
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._buffer = b""

    def __enter__(self) -> "RunnerClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _spawn(self) -> None:
        self._buffer = b""
        self._proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,
        )
        handshake = self._read_line(deadline=time.monotonic() + self._read_grace_s)
        if handshake is None:
            raise ProtocolError("runner produced no handshake line")
        try:
            record = json.loads(handshake)
        except ValueError as exc:
            raise ProtocolError(f"handshake is not valid JSON: {handshake!r}") from exc
        version = str(record.get("protocol_version", ""))
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"unsupported runner protocol version {version!r}"
            )

    def _ensure_proc(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._kill()
            self._spawn()

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except OSError:
                pass
            self._proc = None
        self._buffer = b""

    def _read_line(self, deadline: float) -> str | None:
        """Read one newline-terminated line from the runner, or None on
        EOF/deadline."""
        fd = self._proc.stdout.fileno()
        while True:
            newline = self._buffer.find(b"\n")
            if newline != -1:
                line = self._buffer[:newline]
                self._buffer = self._buffer[newline + 1 :]
                return line.decode("utf-8", errors="replace")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                return None
            self._buffer += chunk

    def evaluate_request(
        self,
        code_text: str,
        test_text: str,
        entry_point: str,
        timeout_s: float,
    ) -> ExecOutcome:
        """Send one evaluation request; respawn and retry once if the
        runner process dies mid-request."""
        request = (
            json.dumps(
                {
                    "code_text": code_text,
                    "test_text": test_text,
                    "entry_point": entry_point,
                    "timeout_s": timeout_s,
                },
                sort_keys=True,
            )
            + "\n"
        )
        with self._lock:
            for attempt in range(2):
                try:
                    self._ensure_proc()
                    self._proc.stdin.write(request.encode("utf-8"))
                    self._proc.stdin.flush()
                except (OSError, ValueError, ProtocolError) as exc:
                    logger.warning("runner unavailable (attempt %d): %s", attempt, exc)
                    self._kill()
                    continue
                deadline = time.monotonic() + timeout_s + self._read_grace_s
                line = self._read_line(deadline)
                if line is None:
                    logger.warning("runner died or stalled; respawning")
                    self._kill()
                    continue
                try:
                    record = json.loads(line)
                except ValueError:
                    raise ProtocolError(f"runner sent a malformed response: {line!r}")
                if "error" in record:
                    raise ProtocolError(f"runner rejected the request: {record['error']}")
                return ExecOutcome(
                    passed=bool(record["passed"]),
                    error_kind=str(record["error_kind"]),
                    detail=str(record.get("detail", "")),
                    duration_ms=int(record.get("duration_ms", 0)),
                )
        return ExecOutcome(
            passed=False,
            error_kind="crash",
            detail="runner process unavailable after respawn",
            duration_ms=0,
        )

    def close(self) -> None:
        with self._lock:
            if self._proc is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
                try:
                    self._proc.wait(timeout=2)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait(timeout=5)
                self._proc = None


class SubprocessEvaluator:
    """CandidateEvaluator backed by a RunnerClient."""

    def __init__(self, client: RunnerClient, timeout_s: float = 10.0):
        self._client = client
        self._timeout_s = timeout_s

    def evaluate(self, task: Task, candidate: Candidate) -> ExecOutcome:
        return self._client.evaluate_request(
            code_text=candidate.code_text,
            test_text=task.tests,
            entry_point=task.entry_point,
            timeout_s=self._timeout_s,
        )
