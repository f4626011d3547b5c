"""Ephemeral execution layer: isolated per-worker sessions.

A session is a fresh namespace holding exactly its input bindings. Cell
stdout, errors, and defined names are confined to the session's cell log and
leave this module only through extract_artifacts or explicit debugging hooks.
Disposal is idempotent and final: afterwards the namespace and log are
unreachable through the public surface.

Two executors implement the same contract: the builtin CellScript interpreter
(deterministic, in-process, used for hermetic testing) and a subprocess kernel
speaking line-delimited canonical JSON (real-interpreter fidelity).
"""

from __future__ import annotations

import json
import subprocess
import threading
from dataclasses import dataclass

from . import cellscript
from .codec import canonical_dumps, value_from_obj, value_to_obj
from .values import is_identifier

__all__ = [
    "CellError",
    "CellOutcome",
    "SandboxSession",
    "SandboxError",
    "SessionDisposedError",
    "ExtractionError",
    "ExecutorError",
    "BuiltinExecutor",
    "KernelExecutor",
    "STDOUT_CAP",
    "TRUNCATION_MARKER",
]

# Per-cell stdout cap with an explicit truncation marker.
STDOUT_CAP = 64 * 1024
TRUNCATION_MARKER = "\n[stdout truncated]\n"


class SandboxError(Exception):
    """Task-level sandbox failure (bad inputs, missing outputs)."""


class SessionDisposedError(SandboxError):
    pass


class ExtractionError(SandboxError):
    def __init__(self, missing, detail: str = ""):
        self.missing = tuple(missing)
        msg = f"missing output bindings: {', '.join(self.missing)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ExecutorError(Exception):
    """Infrastructure failure: the executor itself broke, not the task."""


@dataclass(frozen=True)
class CellError:
    kind: str
    message: str


@dataclass(frozen=True)
class CellOutcome:
    cell_index: int
    stdout: str
    error: CellError | None
    defined_names: tuple = ()


def _cap_stdout(text: str) -> str:
    if len(text) > STDOUT_CAP:
        return text[:STDOUT_CAP] + TRUNCATION_MARKER
    return text


class SandboxSession:
    """Handle to one isolated execution namespace."""

    def __init__(self, session_id: str, executor_kind: str, executor, bindings: dict):
        self.session_id = session_id
        self.executor_kind = executor_kind
        self._executor = executor
        self.bindings = dict(bindings)
        self.cell_log: list = []
        self.disposed = False

    def _check_open(self):
        if self.disposed:
            raise SessionDisposedError(f"session {self.session_id} is disposed")

    def execute_cell(self, code: str) -> CellOutcome:
        self._check_open()
        stdout, error, defined = self._executor._execute(self, code)
        outcome = CellOutcome(
            cell_index=len(self.cell_log),
            stdout=_cap_stdout(stdout),
            error=CellError(*error) if error is not None else None,
            defined_names=tuple(defined),
        )
        self.cell_log.append(outcome)
        return outcome

    def extract_artifacts(self, returns) -> dict:
        """Read each return field's binding and convert it to a Value.

        Missing names are reported, never invented.
        """
        self._check_open()
        names = [f.name for f in returns]
        return self._executor._extract(self, names)

    def dispose(self):
        if self.disposed:
            return
        self.disposed = True
        self._executor._dispose(self)


def _check_inputs(inputs: dict):
    for name in inputs:
        if not is_identifier(name):
            raise SandboxError(f"input name {name!r} is not a valid identifier")


class BuiltinExecutor:
    """In-process CellScript interpreter. Reentrant across sessions; every
    session owns a private namespace dict."""

    kind = "builtin"

    def __init__(self):
        self._counter = 0
        self._namespaces: dict = {}
        self.sessions_spawned = 0
        self.sessions_disposed = 0

    def spawn(self, inputs: dict) -> SandboxSession:
        _check_inputs(inputs)
        self._counter += 1
        session_id = f"b{self._counter}"
        session = SandboxSession(session_id, self.kind, self, inputs)
        self._namespaces[session_id] = dict(inputs)
        self.sessions_spawned += 1
        return session

    def _execute(self, session: SandboxSession, code: str):
        namespace = self._namespaces[session.session_id]
        return cellscript.run_cell(namespace, code)

    def _extract(self, session: SandboxSession, names) -> dict:
        namespace = self._namespaces[session.session_id]
        missing = [n for n in names if n not in namespace]
        if missing:
            raise ExtractionError(missing)
        return {n: namespace[n] for n in names}

    def _dispose(self, session: SandboxSession):
        self._namespaces.pop(session.session_id, None)
        self.sessions_disposed += 1


class KernelExecutor:
    """Subprocess kernel client: one kernel process per session for hard
    isolation, line-delimited canonical JSON on stdin/stdout.

    Any transport fault (timeout, EOF, crash, malformed reply) is an
    ExecutorError: infrastructure, never a task failure.
    """

    kind = "kernel"

    def __init__(self, command, timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout
        self._counter = 0
        self._procs: dict = {}
        self.sessions_spawned = 0
        self.sessions_disposed = 0

    def spawn(self, inputs: dict) -> SandboxSession:
        _check_inputs(inputs)
        self._counter += 1
        session_id = f"k{self._counter}"
        try:
            proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as exc:
            raise ExecutorError(f"cannot launch kernel {self.command!r}: {exc}") from exc
        self._procs[session_id] = proc
        session = SandboxSession(session_id, self.kind, self, inputs)
        self._request(session_id, {
            "op": "spawn",
            "session": session_id,
            "bindings": {n: value_to_obj(v) for n, v in inputs.items()},
        })
        self.sessions_spawned += 1
        return session

    def _request(self, session_id: str, payload: dict) -> dict:
        proc = self._procs.get(session_id)
        if proc is None or proc.poll() is not None:
            raise ExecutorError(f"kernel for {session_id} is not running")
        line = canonical_dumps(payload)
        try:
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExecutorError(f"kernel write failed: {exc}") from exc
        reply = self._read_line(proc)
        try:
            obj = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ExecutorError(f"kernel sent malformed reply: {exc}") from exc
        if not obj.get("ok", False):
            err = obj.get("error", {})
            raise ExecutorError(
                f"kernel error: {err.get('kind', '?')}: {err.get('message', '')}"
            )
        return obj.get("result", {})

    def _read_line(self, proc) -> str:
        box: list = []

        def reader():
            box.append(proc.stdout.readline())

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        t.join(self.timeout)
        if t.is_alive():
            proc.kill()
            raise ExecutorError(f"kernel reply timed out after {self.timeout}s")
        line = box[0] if box else ""
        if not line:
            raise ExecutorError("kernel closed its stream mid-request")
        return line

    def _execute(self, session: SandboxSession, code: str):
        result = self._request(session.session_id, {
            "op": "exec", "session": session.session_id, "code": code,
        })
        error = result.get("error")
        return (
            result.get("stdout", ""),
            (error["kind"], error["message"]) if error else None,
            list(result.get("defined_names", [])),
        )

    def _extract(self, session: SandboxSession, names) -> dict:
        result = self._request(session.session_id, {
            "op": "extract", "session": session.session_id, "names": list(names),
        })
        missing = list(result.get("missing", []))
        unconvertible = result.get("unconvertible", {})
        if missing or unconvertible:
            raise ExtractionError(
                missing + sorted(unconvertible),
                detail="; ".join(f"{n}: {r}" for n, r in sorted(unconvertible.items())),
            )
        return {
            n: value_from_obj(obj, f"$.{n}") for n, obj in result.get("values", {}).items()
        }

    def _dispose(self, session: SandboxSession):
        self.sessions_disposed += 1
        proc = self._procs.pop(session.session_id, None)
        if proc is None:
            return
        try:
            if proc.poll() is None:
                self._best_effort_dispose(proc, session.session_id)
        finally:
            self._terminate(proc)

    def _best_effort_dispose(self, proc, session_id: str):
        try:
            proc.stdin.write(canonical_dumps({"op": "dispose", "session": session_id}) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass

    def _terminate(self, proc):
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                pass

    def shutdown(self):
        for proc in list(self._procs.values()):
            self._terminate(proc)
        self._procs.clear()
