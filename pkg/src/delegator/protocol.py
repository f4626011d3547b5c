"""Top-level execution protocol: dispatch loop, budgets, escalation.

One run is single-threaded end to end and owns its workspace, sessions, and
trace; many runs may proceed concurrently with zero shared mutable state.
Outcomes: Completed, Failure (a subtask could not be handled within its retry
and replan budgets), BudgetExceeded (dispatch rounds ran out), or EngineError
(the policy broke the protocol — kept distinct so task metrics stay honest).

Modes: ``full`` is the real protocol. ``no_epss`` keeps the control flow but
passes artifacts as printed text with no typed validation, and ``single_agent``
runs everything in one shared session and one accumulated context; both exist
only as ablation baselines for measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .agents import (
    DELEGATOR,
    DelegationFault,
    ProtocolViolation,
    assess,
    coder_run,
    decompose,
    gen_spec,
    render_spec,
)
from .messages import CoderResult, FAIL, RETRY, SUCCESS
from .sandbox import ExecutorError
from .values import render_value
from .workspace import ReplanExhausted, Workspace, WorkspaceError

__all__ = [
    "Budgets",
    "Completed",
    "Failure",
    "BudgetExceeded",
    "EngineError",
    "RunTrace",
    "RunResult",
    "run",
    "FULL",
    "NO_EPSS",
    "SINGLE_AGENT",
    "STRICT_ALG1",
    "ESCALATE_TO_REPLAN",
]

FULL = "full"
NO_EPSS = "no_epss"
SINGLE_AGENT = "single_agent"
MODES = (FULL, NO_EPSS, SINGLE_AGENT)

STRICT_ALG1 = "strict_alg1"
ESCALATE_TO_REPLAN = "escalate_to_replan"
ESCALATIONS = (STRICT_ALG1, ESCALATE_TO_REPLAN)


@dataclass(frozen=True)
class Budgets:
    """retries per subtask, iterations per worker, dispatch rounds per run,
    replan edits per run."""

    retries: int = 3
    coder_iterations: int = 20
    dispatch_rounds: int = 100
    replans: int = 3

    def __post_init__(self):
        for name in ("retries", "coder_iterations", "dispatch_rounds", "replans"):
            if getattr(self, name) < 0:
                raise ValueError(f"budget {name} must be >= 0")


@dataclass(frozen=True)
class Completed:
    summary: str
    exit_code = 0


@dataclass(frozen=True)
class Failure:
    subtask_id: str
    diagnostics: object
    exit_code = 1


@dataclass(frozen=True)
class BudgetExceeded:
    budget: str
    exit_code = 2


@dataclass(frozen=True)
class EngineError:
    message: str
    exit_code = 3


@dataclass
class RunTrace:
    """Counters and the protocol event stream for one run.

    Events are (kind, subtask_id) with kind in dispatch/retry/replan/commit.
    Budget-safety assertions and the conformance comparison both read this.
    """

    events: list = field(default_factory=list)
    dispatches: int = 0
    retries: int = 0
    replans: int = 0
    coder_iterations: int = 0
    error_count: int = 0
    delegator_calls: int = 0
    delegator_context_chars: int = 0
    coder_context_chars: int = 0
    sessions_spawned: int = 0
    sessions_disposed: int = 0
    delegator_contexts: list = field(default_factory=list)
    coder_contexts: list = field(default_factory=list)


@dataclass
class RunResult:
    outcome: object
    trace: RunTrace
    workspace: Workspace


class _TracedPolicy:
    """Counts per-role context sizes; optionally captures the texts for the
    pollution tests."""

    def __init__(self, inner, trace: RunTrace, capture: bool = False):
        self._inner = inner
        self._trace = trace
        self._capture = capture

    def propose(self, role, context, expected):
        if role == DELEGATOR:
            self._trace.delegator_calls += 1
            self._trace.delegator_context_chars += len(context)
            if self._capture:
                self._trace.delegator_contexts.append(context)
        else:
            self._trace.coder_context_chars += len(context)
            if self._capture:
                self._trace.coder_contexts.append(context)
        return self._inner.propose(role, context, expected)


class _SharedContextPolicy:
    """single_agent ablation: every proposal sees the one accumulated log."""

    def __init__(self, inner, shared_log: list):
        self._inner = inner
        self._shared_log = shared_log

    def propose(self, role, context, expected):
        merged = "".join(self._shared_log) + context
        return self._inner.propose(role, merged, expected)


def run(task: str, budgets: Budgets, policy, executor, mode: str = FULL,
        escalation: str = ESCALATE_TO_REPLAN, journal_path=None,
        initial_artifacts=None, predicates=None,
        capture_contexts: bool = False) -> RunResult:
    """Execute one task to a terminal outcome. Every spawned session is
    disposed on every control path, including engine errors."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if escalation not in ESCALATIONS:
        raise ValueError(f"unknown escalation {escalation!r}")
    if budgets.coder_iterations < 1:
        raise ValueError("coder_iterations budget must be >= 1 to run")

    trace = RunTrace()
    ws = Workspace(task, journal_path=journal_path)
    engine = _Engine(task, budgets, policy, executor, mode, escalation,
                     ws, trace, predicates or {}, capture_contexts)
    try:
        for name, value in (initial_artifacts or {}).items():
            ws.seed_artifact(name, value)
        outcome = engine.execute()
    except ProtocolViolation as exc:
        outcome = EngineError(str(exc))
    finally:
        engine.cleanup()
        ws.close()
    return RunResult(outcome=outcome, trace=trace, workspace=ws)


class _Engine:
    def __init__(self, task, budgets, policy, executor, mode, escalation,
                 ws, trace, predicates, capture_contexts):
        self.task = task
        self.budgets = budgets
        self.executor = executor
        self.mode = mode
        self.escalation = escalation
        self.ws = ws
        self.trace = trace
        self.predicates = predicates
        self.shared_log: list = []
        self.verbose_notes: dict = {}
        self.shared_session = None
        traced = _TracedPolicy(policy, trace, capture_contexts)
        if mode == SINGLE_AGENT:
            self.policy = _SharedContextPolicy(traced, self.shared_log)
        else:
            self.policy = traced

    # -- mode helpers ---------------------------------------------------------

    def planning_ctx(self):
        if self.mode == NO_EPSS:
            return self._verbose_planning_ctx()
        return None  # gen_spec/assess fall back to the workspace rendering

    def _verbose_planning_ctx(self) -> str:
        """Free-text rendering: full artifact printouts, uncapped notes."""
        lines = [f"Task: {self.task}"]
        if self.ws.plan is not None and self.ws.plan.subtasks:
            lines.append("Plan:")
            for s in self.ws.plan.subtasks:
                lines.append(f"  [{s.id}] {s.title} :: {s.status} retries={s.retry_count}")
        names = self.ws.artifact_names()
        if names:
            lines.append("Artifacts (printed):")
            for name in names:
                value, _ann = self.ws.resolve(name)
                lines.append(f"  {name} =")
                lines.append(render_value(value))
        for sid in sorted(self.verbose_notes):
            lines.append(f"[{sid}] {self.verbose_notes[sid]}")
        return "\n".join(lines) + "\n"

    def _coder_context_fn(self):
        if self.mode != NO_EPSS:
            return None
        ws = self.ws

        def verbose(spec, history):
            parts = [render_spec(spec), "Inputs (printed):\n"]
            for b in spec.inputs:
                value, _ann = ws.resolve(b.artifact_name)
                parts.append(f"{b.name} =\n{render_value(value)}\n")
            for outcome in history:
                parts.append(f"--- cell {outcome.cell_index} ---\n")
                if outcome.stdout:
                    parts.append(outcome.stdout)
                if outcome.error is not None:
                    parts.append(f"error {outcome.error.kind}: {outcome.error.message}\n")
            parts.append("Next action?\n")
            return "".join(parts)

        return verbose

    # -- session management ----------------------------------------------------

    def _open_session(self, spec):
        if self.mode == SINGLE_AGENT:
            if self.shared_session is None:
                bindings = {}
                for name in self.ws.artifact_names():
                    value, _ann = self.ws.resolve(name)
                    bindings[name] = value
                self.shared_session = self.executor.spawn(bindings)
                self.trace.sessions_spawned += 1
            return self.shared_session, False
        bindings = {}
        for b in spec.inputs:
            value, _ann = self.ws.resolve(b.artifact_name)
            bindings[b.name] = value
        session = self.executor.spawn(bindings)
        self.trace.sessions_spawned += 1
        return session, True

    def cleanup(self):
        if self.shared_session is not None and not self.shared_session.disposed:
            self.shared_session.dispose()
            self.trace.sessions_disposed += 1
            self.shared_session = None

    # -- main loop ---------------------------------------------------------------

    def execute(self):
        plan = decompose(self.task, self.policy)
        self.ws.set_plan(plan)
        if self.mode == SINGLE_AGENT:
            self.shared_log.append(
                "Shared log:\n" + "".join(
                    f"planned [{s.id}] {s.title}\n" for s in plan.subtasks
                )
            )
        while True:
            st = self.ws.next_pending()
            if st is None:
                return Completed(self.ws.summary())
            self.ws.mark_in_progress(st)
            outcome = self._drive_subtask(st)
            if outcome is not None:
                return outcome

    def _drive_subtask(self, st):
        """Dispatch/retry/replan one subtask. Returns a terminal outcome or
        None when the main loop should continue."""
        prior = None
        while True:
            if self.trace.dispatches >= self.budgets.dispatch_rounds:
                return BudgetExceeded("dispatch_rounds")
            spec = gen_spec(st, self.ws, prior, self.policy, self.planning_ctx())
            if isinstance(spec, DelegationFault):
                result, values = CoderResult(
                    subtask_id=st.id, status=FAIL,
                    summary="specification could not be grounded",
                    diagnostics=spec.diagnostics,
                ), None
            else:
                self.ws.note_spec_issued(spec)
                self.trace.dispatches += 1
                self.trace.events.append(("dispatch", st.id))
                result, values = self._run_coder(st, spec)
            self.ws.note_result(result)
            if self.mode == NO_EPSS:
                self._note_verbose(st, result, values)
            if result.status == SUCCESS:
                self.ws.commit(result, spec.returns, values)
                self.trace.events.append(("commit", st.id))
                return None
            decision = assess(
                result, st, st.retry_count, self.budgets.retries, self.policy,
                escalate=(self.escalation == ESCALATE_TO_REPLAN),
                workspace_ctx=self.planning_ctx() or self.ws.planning_context(),
            )
            if decision.verdict == RETRY:
                if st.retry_count >= self.budgets.retries:
                    # strict mode: the retry loop ended unresolved
                    self.ws.mark_failed(st, result.diagnostics.root_cause)
                    return Failure(st.id, result.diagnostics)
                self.ws.note_retry(st, decision.refined_directive)
                self.trace.retries += 1
                self.trace.events.append(("retry", st.id))
                prior = (result.diagnostics, decision.refined_directive)
                continue
            # replan (voted, or clamped from exhausted retries)
            if self.ws.plan.replan_count >= self.budgets.replans:
                self.ws.mark_failed(st, result.diagnostics.root_cause)
                return Failure(st.id, result.diagnostics)
            try:
                self.ws.splice_replan(decision.edit, self.budgets.replans)
            except ReplanExhausted:
                self.ws.mark_failed(st, result.diagnostics.root_cause)
                return Failure(st.id, result.diagnostics)
            except WorkspaceError as exc:  # malformed edit is a policy fault
                raise ProtocolViolation(f"replan edit rejected: {exc}") from None
            self.trace.replans += 1
            self.trace.events.append(("replan", st.id))
            return None

    def _run_coder(self, st, spec):
        session, own = self._open_session_safe(spec)
        if session is None:
            return self._infra_fail(st, "could not spawn an execution session"), None
        cells_before = len(session.cell_log)
        try:
            result, values = coder_run(
                spec, session, self.policy, self.budgets.coder_iterations,
                predicates=self.predicates,
                context_fn=self._coder_context_fn(),
                validate=(self.mode != NO_EPSS),
            )
        finally:
            new_cells = session.cell_log[cells_before:]
            self.trace.coder_iterations += len(new_cells)
            self.trace.error_count += sum(1 for c in new_cells if c.error is not None)
            if self.mode == SINGLE_AGENT:
                for c in new_cells:
                    text = c.stdout
                    if c.error is not None:
                        text += f"error {c.error.kind}: {c.error.message}\n"
                    self.shared_log.append(f"[cell {st.id}/{c.cell_index}]\n{text}")
            if own and not session.disposed:
                session.dispose()
                self.trace.sessions_disposed += 1
        return result, values

    def _open_session_safe(self, spec):
        try:
            return self._open_session(spec)
        except ExecutorError:
            return None, False

    def _infra_fail(self, st, detail: str) -> CoderResult:
        from .messages import Diagnostics

        return CoderResult(
            subtask_id=st.id, status=FAIL, summary="execution environment failed",
            diagnostics=Diagnostics(
                root_cause="infrastructure", failed_operation=detail,
                recoverable_hint=True,
            ),
        )

    def _note_verbose(self, st, result: CoderResult, values):
        if result.status == SUCCESS:
            printed = "; ".join(
                f"{name}={render_value(values[name])}" for name, _ in result.artifacts
            )
            self.verbose_notes[st.id] = f"{result.summary} | outputs: {printed}"
        else:
            d = result.diagnostics
            self.verbose_notes[st.id] = f"failed: {d.root_cause} ({d.failed_operation})"
