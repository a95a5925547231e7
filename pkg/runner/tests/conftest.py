import json
import os
import select
import subprocess
import sys
from pathlib import Path

import pytest

SRC_DIR = Path(__file__).resolve().parent.parent / "src"


class RunnerProcess:
    """Minimal protocol client used by the tests: spawns the runner and
    exchanges JSON lines with a read deadline."""

    def __init__(self):
        env = dict(os.environ)
        env["PYTHONPATH"] = str(SRC_DIR) + os.pathsep + env.get("PYTHONPATH", "")
        self.proc = subprocess.Popen(
            [sys.executable, "-u", "-m", "sandbox_runner"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
        )
        self._buffer = b""

    def read_line(self, timeout_s: float = 10.0) -> str:
        import time

        deadline = time.monotonic() + timeout_s
        fd = self.proc.stdout.fileno()
        while True:
            newline = self._buffer.find(b"\n")
            if newline != -1:
                line = self._buffer[:newline]
                self._buffer = self._buffer[newline + 1 :]
                return line.decode("utf-8")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("no line from runner within deadline")
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise EOFError("runner closed its stdout")
            self._buffer += chunk

    def read_record(self, timeout_s: float = 10.0) -> dict:
        return json.loads(self.read_line(timeout_s))

    def send_line(self, line: str) -> None:
        self.proc.stdin.write((line + "\n").encode("utf-8"))
        self.proc.stdin.flush()

    def request(self, code_text, test_text, entry_point="", timeout_s=5.0, read_timeout=None) -> dict:
        self.send_line(
            json.dumps(
                {
                    "code_text": code_text,
                    "test_text": test_text,
                    "entry_point": entry_point,
                    "timeout_s": timeout_s,
                }
            )
        )
        return self.read_record(read_timeout or (timeout_s + 10.0))

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@pytest.fixture
def runner():
    proc = RunnerProcess()
    handshake = proc.read_record()
    assert handshake == {"protocol_version": "1"}
    yield proc
    proc.close()
