"""Source of the per-request child program.

The child is launched as ``python -I -c CHILD_SOURCE`` with the request
JSON on stdin, so it needs no installed packages and no filesystem access
beyond its working directory. It executes the candidate and its tests in a
fresh namespace, classifies the outcome, and writes exactly one JSON line
to the duplicated original stdout. Candidate prints go to /dev/null, and
sockets are disabled before any candidate code runs.
"""

CHILD_SOURCE = r"""
import io, json, os, sys, traceback

req = json.loads(sys.stdin.read())

# Keep the result channel, then silence the candidate's stdout/stderr.
result_fd = os.dup(1)
devnull = os.open(os.devnull, os.O_WRONLY)
os.dup2(devnull, 1)
os.dup2(devnull, 2)
sys.stdout = io.TextIOWrapper(io.FileIO(1, "w", closefd=False), write_through=True)
sys.stderr = io.TextIOWrapper(io.FileIO(2, "w", closefd=False), write_through=True)

import socket

def _no_network(*args, **kwargs):
    raise OSError("network access is disabled in the execution sandbox")

socket.socket = _no_network
socket.create_connection = _no_network
socket.socketpair = _no_network


def finish(passed, kind, detail):
    record = {"passed": passed, "error_kind": kind, "detail": detail[:1000]}
    os.write(result_fd, (json.dumps(record) + "\n").encode("utf-8"))
    os._exit(0)


namespace = {"__name__": "__main__"}
try:
    exec(compile(req["code_text"], "<candidate>", "exec"), namespace)
    exec(compile(req["test_text"], "<tests>", "exec"), namespace)
    check = namespace.get("check")
    entry_point = req.get("entry_point") or ""
    if callable(check):
        if not entry_point:
            raise NameError("tests define check() but the request names no entry point")
        if entry_point not in namespace:
            raise NameError("entry point %r is not defined by the candidate" % entry_point)
        check(namespace[entry_point])
except AssertionError as exc:
    finish(False, "assertion", str(exc) or "assertion failed")
except BaseException as exc:
    detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    finish(False, "exception", detail)
finish(True, "none", "")
"""
