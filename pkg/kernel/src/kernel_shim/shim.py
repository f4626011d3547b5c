"""Subprocess script kernel: one real interpreter namespace per session.

Speaks line-delimited canonical JSON on stdin/stdout. Requests carry an op
(spawn/exec/extract/dispose) and a session id; every request gets exactly one
response line, in order. Cell code is host-language source executed in the
session's namespace with stdout captured and capped; user exceptions come back
as ordinary cell errors, never as kernel failures. A malformed request line
gets an error response and the kernel keeps serving; stdin EOF is a clean
shutdown.

Self-contained on purpose: the only contract with the runtime that launches
this script is the wire format itself.
"""

from __future__ import annotations

import io
import json
import math
import sys
from contextlib import redirect_stdout

STDOUT_CAP = 64 * 1024
TRUNCATION_MARKER = "\n[stdout truncated]\n"


def canonical_dumps(obj) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


# ---------------------------------------------------------------------------
# Value conversion (the runtime's tagged value encoding)
# ---------------------------------------------------------------------------


class Unconvertible(Exception):
    pass


def value_to_py(obj):
    kind = obj.get("kind")
    if kind == "null":
        return None
    if kind in ("bool", "int", "text"):
        return obj["value"]
    if kind == "float":
        return float(obj["value"])
    if kind == "list":
        return [value_to_py(x) for x in obj["items"]]
    if kind == "record":
        return {n: value_to_py(x) for n, x in obj["fields"].items()}
    if kind == "table":
        return {
            "columns": list(obj["columns"]),
            "rows": [[value_to_py(c) for c in row] for row in obj["rows"]],
        }
    raise Unconvertible(f"unknown value kind {kind!r}")


def _is_table_shaped(obj) -> bool:
    return (
        isinstance(obj, dict)
        and set(obj.keys()) == {"columns", "rows"}
        and isinstance(obj["columns"], list)
        and all(isinstance(c, str) for c in obj["columns"])
        and isinstance(obj["rows"], list)
        and all(isinstance(r, (list, tuple)) for r in obj["rows"])
    )


def py_to_value(obj):
    if obj is None:
        return {"kind": "null"}
    if isinstance(obj, bool):
        return {"kind": "bool", "value": obj}
    if isinstance(obj, int):
        return {"kind": "int", "value": obj}
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise Unconvertible("non-finite float")
        return {"kind": "float", "value": obj}
    if isinstance(obj, str):
        return {"kind": "text", "value": obj}
    if isinstance(obj, (list, tuple)):
        return {"kind": "list", "items": [py_to_value(x) for x in obj]}
    if _is_table_shaped(obj):
        return {
            "kind": "table",
            "columns": list(obj["columns"]),
            "rows": [[py_to_value(c) for c in row] for row in obj["rows"]],
        }
    if isinstance(obj, dict):
        if not all(isinstance(k, str) for k in obj):
            raise Unconvertible("record keys must be strings")
        return {"kind": "record", "fields": {k: py_to_value(v) for k, v in obj.items()}}
    raise Unconvertible(f"cannot convert {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Request handling
# ---------------------------------------------------------------------------


class Kernel:
    def __init__(self):
        self.sessions: dict = {}

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "spawn":
            return self._spawn(request)
        if op == "exec":
            return self._exec(request)
        if op == "extract":
            return self._extract(request)
        if op == "dispose":
            return self._dispose(request)
        return _error("bad_request", f"unknown op {op!r}")

    def _session(self, request):
        sid = request.get("session")
        if sid not in self.sessions:
            return None, _error("unknown_session", f"no session {sid!r}")
        return sid, None

    def _spawn(self, request) -> dict:
        sid = request.get("session")
        if not isinstance(sid, str) or not sid:
            return _error("bad_request", "spawn needs a session id")
        if sid in self.sessions:
            return _error("bad_request", f"session {sid!r} already exists")
        namespace: dict = {}
        try:
            for name, obj in request.get("bindings", {}).items():
                namespace[name] = value_to_py(obj)
        except (Unconvertible, KeyError, TypeError) as exc:
            return _error("bad_request", f"bad binding: {exc}")
        self.sessions[sid] = namespace
        return _ok({})

    def _exec(self, request) -> dict:
        sid, err = self._session(request)
        if err:
            return err
        code = request.get("code")
        if not isinstance(code, str):
            return _error("bad_request", "exec needs code")
        namespace = self.sessions[sid]
        before = set(namespace)
        buffer = io.StringIO()
        error = None
        try:
            compiled = compile(code, "<cell>", "exec")
        except SyntaxError as exc:
            error = {"kind": "parse", "message": str(exc)}
            compiled = None
        if compiled is not None:
            try:
                with redirect_stdout(buffer):
                    exec(compiled, namespace)  # noqa: S102 - this is the kernel's job
            except BaseException as exc:  # user errors stay user errors
                error = {"kind": "runtime", "message": str(exc)}
        stdout = buffer.getvalue()
        if len(stdout) > STDOUT_CAP:
            stdout = stdout[:STDOUT_CAP] + TRUNCATION_MARKER
        defined = [
            name for name in namespace
            if name not in before and not name.startswith("__")
        ]
        return _ok({"stdout": stdout, "error": error, "defined_names": defined})

    def _extract(self, request) -> dict:
        sid, err = self._session(request)
        if err:
            return err
        names = request.get("names", [])
        namespace = self.sessions[sid]
        values = {}
        missing = []
        unconvertible = {}
        for name in names:
            if name not in namespace:
                missing.append(name)
                continue
            try:
                values[name] = py_to_value(namespace[name])
            except Unconvertible as exc:
                unconvertible[name] = str(exc)
        return _ok({"values": values, "missing": missing, "unconvertible": unconvertible})

    def _dispose(self, request) -> dict:
        sid = request.get("session")
        self.sessions.pop(sid, None)  # idempotent
        return _ok({})


def _ok(result: dict) -> dict:
    return {"ok": True, "result": result}


def _error(kind: str, message: str) -> dict:
    return {"ok": False, "error": {"kind": kind, "message": message}}


def serve(stdin=None, stdout=None) -> int:
    """Process requests until stdin closes. Never raises for request-level
    problems; a crash here is a kernel bug the supervisor maps to an
    infrastructure error."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    kernel = Kernel()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be an object")
        except ValueError as exc:
            response = _error("malformed", str(exc))
        else:
            response = kernel.handle(request)
        stdout.write(canonical_dumps(response) + "\n")
        stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(serve())
