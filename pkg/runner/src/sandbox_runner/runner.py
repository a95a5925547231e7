"""Line-protocol execution runner.

Protocol, one JSON object per line on the standard streams:

- on startup the runner announces ``{"protocol_version": "1"}``
- request:  ``{"code_text", "test_text", "entry_point", "timeout_s"}``
- response: ``{"passed", "error_kind", "detail", "duration_ms"}``
- a malformed request gets ``{"error": "..."}`` and the runner continues

Every request runs in a fresh child interpreter with a private temporary
working directory, so a crashing or hanging candidate never takes the
runner down: the child is killed (process group and all) no later than
``timeout_s`` plus a small grace period, and the next request is served
normally. stderr is reserved for diagnostics.
"""

from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time

from .child import CHILD_SOURCE

PROTOCOL_VERSION = "1"
MAX_TIMEOUT_S = 60.0


def validate_request(record: object) -> str | None:
    """Return an error message for a malformed request, else None."""
    if not isinstance(record, dict):
        return "request must be a JSON object"
    for key in ("code_text", "test_text", "entry_point"):
        if not isinstance(record.get(key), str):
            return f"field {key!r} must be a string"
    timeout = record.get("timeout_s")
    if not isinstance(timeout, (int, float)) or isinstance(timeout, bool):
        return "field 'timeout_s' must be a number"
    if not 0 < float(timeout) <= MAX_TIMEOUT_S:
        return f"field 'timeout_s' must be in (0, {MAX_TIMEOUT_S:g}]"
    return None


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def run_request(record: dict, python_exe: str = sys.executable) -> dict:
    """Execute one validated request in a child process and classify it."""
    timeout_s = float(record["timeout_s"])
    workdir = tempfile.mkdtemp(prefix="sandbox-run-")
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            [python_exe, "-I", "-c", CHILD_SOURCE],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            cwd=workdir,
            start_new_session=True,
        )
        payload = json.dumps(
            {
                "code_text": record["code_text"],
                "test_text": record["test_text"],
                "entry_point": record["entry_point"],
            }
        ).encode("utf-8")
        try:
            out, _ = proc.communicate(payload, timeout=timeout_s)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            proc.communicate()
            duration_ms = int(round((time.perf_counter() - start) * 1000))
            return {
                "passed": False,
                "error_kind": "timeout",
                "detail": f"no result within {timeout_s:g}s",
                "duration_ms": duration_ms,
            }
        duration_ms = int(round((time.perf_counter() - start) * 1000))
        lines = [line for line in out.decode("utf-8", "replace").splitlines() if line.strip()]
        result = None
        if lines:
            try:
                result = json.loads(lines[-1])
            except ValueError:
                result = None
        if (
            not isinstance(result, dict)
            or not isinstance(result.get("passed"), bool)
            or result.get("error_kind") not in ("none", "assertion", "exception")
        ):
            code = proc.returncode
            reason = (
                f"killed by signal {-code}" if code is not None and code < 0
                else f"exit status {code} with no result"
            )
            return {
                "passed": False,
                "error_kind": "crash",
                "detail": reason,
                "duration_ms": duration_ms,
            }
        return {
            "passed": result["passed"],
            "error_kind": result["error_kind"],
            "detail": str(result.get("detail", "")),
            "duration_ms": duration_ms,
        }
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def serve(stdin=None, stdout=None) -> int:
    """Read request lines until EOF, answering each with exactly one line."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(record: dict) -> None:
        stdout.write(json.dumps(record) + "\n")
        stdout.flush()

    emit({"protocol_version": PROTOCOL_VERSION})
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            print(f"sandbox-runner: malformed request line: {exc}", file=sys.stderr)
            emit({"error": f"request is not valid JSON: {exc}"})
            continue
        problem = validate_request(record)
        if problem is not None:
            print(f"sandbox-runner: rejected request: {problem}", file=sys.stderr)
            emit({"error": problem})
            continue
        emit(run_request(record))
    return 0


def main(argv: list[str] | None = None) -> int:
    return serve()


if __name__ == "__main__":
    sys.exit(main())
