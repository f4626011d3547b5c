"""Planner and worker behaviors over a pluggable policy.

The policy is the only judgment source: it proposes plans, specifications,
code cells, result reports, and verdicts. Everything else here is mechanism,
and the mechanism enforces the information asymmetry: planner-side contexts
are rendered from workspace state only (never cell output), worker-side
contexts are rendered from the active specification and the current session's
own cell history only (never sibling subtasks).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import codec
from .messages import (
    CoderResult,
    Decision,
    Diagnostics,
    FAIL,
    PROCEED,
    REPLAN,
    RETRY,
    ReplanEdit,
    SUCCESS,
    SchemaError,
    Specification,
    SubTaskSeed,
    InputBinding,
    validate_result,
    validate_specification,
)
from .sandbox import ExecutorError, SandboxSession
from .values import preview, render_annotation, render_preview
from .workspace import Plan, SubTask, Workspace, WorkspaceError

__all__ = [
    "DELEGATOR",
    "CODER",
    "PlanProposal",
    "SpecProposal",
    "Code",
    "ResultReport",
    "Verdict",
    "PolicyAction",
    "ProtocolViolation",
    "DelegationFault",
    "action_kind",
    "action_to_obj",
    "action_from_obj",
    "decompose",
    "gen_spec",
    "coder_run",
    "assess",
    "decompose_context",
    "spec_context",
    "verdict_context",
    "coder_context",
]

DELEGATOR = "delegator"
CODER = "coder"


class ProtocolViolation(Exception):
    """The policy broke the protocol (wrong action kind, malformed action)."""


# ---------------------------------------------------------------------------
# Policy actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanProposal:
    seeds: tuple = ()


@dataclass(frozen=True)
class SpecProposal:
    directive: str
    input_names: tuple = ()
    returns: tuple = ()


@dataclass(frozen=True)
class Code:
    source: str


@dataclass(frozen=True)
class ResultReport:
    summary: str
    diagnostics: Diagnostics | None = None


@dataclass(frozen=True)
class Verdict:
    decision: Decision


PolicyAction = (PlanProposal, SpecProposal, Code, ResultReport, Verdict)

_KINDS = {
    PlanProposal: "plan",
    SpecProposal: "spec",
    Code: "code",
    ResultReport: "report",
    Verdict: "verdict",
}


def action_kind(action) -> str:
    kind = _KINDS.get(type(action))
    if kind is None:
        raise ProtocolViolation(f"not a policy action: {action!r}")
    return kind


def action_to_obj(action) -> dict:
    kind = action_kind(action)
    if isinstance(action, PlanProposal):
        seeds = []
        for s in action.seeds:
            obj = {"title": s.title, "directive_seed": s.directive_seed}
            if s.id is not None:
                obj["id"] = s.id
            seeds.append(obj)
        return {"action": kind, "seeds": seeds}
    if isinstance(action, SpecProposal):
        return {
            "action": kind,
            "directive": action.directive,
            "inputs": list(action.input_names),
            "returns": [codec.return_field_to_obj(f) for f in action.returns],
        }
    if isinstance(action, Code):
        return {"action": kind, "source": action.source}
    if isinstance(action, ResultReport):
        obj = {"action": kind, "summary": action.summary}
        if action.diagnostics is not None:
            obj["diagnostics"] = codec.diagnostics_to_obj(action.diagnostics)
        return obj
    d = action.decision
    obj = {"action": kind, "verdict": d.verdict, "rationale": d.rationale}
    if d.refined_directive is not None:
        obj["refined_directive"] = d.refined_directive
    if d.edit is not None:
        obj["edit"] = codec.edit_to_obj(d.edit)
    return obj


def action_from_obj(obj):
    if not isinstance(obj, dict) or "action" not in obj:
        raise ProtocolViolation("action object must carry an 'action' tag")
    kind = obj["action"]
    try:
        if kind == "plan":
            seeds = tuple(
                SubTaskSeed(
                    title=s["title"], directive_seed=s["directive_seed"],
                    id=s.get("id"),
                )
                for s in obj.get("seeds", [])
            )
            return PlanProposal(seeds)
        if kind == "spec":
            return SpecProposal(
                directive=obj["directive"],
                input_names=tuple(obj.get("inputs", [])),
                returns=tuple(
                    codec.return_field_from_obj(f, f"$.returns[{i}]")
                    for i, f in enumerate(obj.get("returns", []))
                ),
            )
        if kind == "code":
            return Code(source=obj["source"])
        if kind == "report":
            diagnostics = None
            if "diagnostics" in obj:
                diagnostics = codec.diagnostics_from_obj(obj["diagnostics"], "$.diagnostics")
            return ResultReport(summary=obj["summary"], diagnostics=diagnostics)
        if kind == "verdict":
            edit = None
            if "edit" in obj:
                edit = codec.edit_from_obj(obj["edit"], "$.edit")
            return Verdict(Decision(
                verdict=obj["verdict"],
                rationale=obj.get("rationale", ""),
                refined_directive=obj.get("refined_directive"),
                edit=edit,
            ))
    except (KeyError, TypeError, SchemaError, codec.DecodeError) as exc:
        raise ProtocolViolation(f"malformed {kind!r} action: {exc}") from None
    raise ProtocolViolation(f"unknown action kind {kind!r}")


def _propose(policy, role: str, context: str, expected: frozenset):
    action = policy.propose(role, context, expected)
    kind = action_kind(action)
    if kind not in expected:
        raise ProtocolViolation(
            f"policy returned {kind!r} where one of {sorted(expected)} was expected"
        )
    return action


# ---------------------------------------------------------------------------
# Context templates (frozen by golden tests; documented in docs/)
# ---------------------------------------------------------------------------


def decompose_context(task: str) -> str:
    return f"Task: {task}\nPropose an ordered plan of atomic, verifiable subtasks.\n"


def spec_context(workspace_ctx: str, st: SubTask, prior=None, fault: str = "") -> str:
    parts = [workspace_ctx, f"Focus: [{st.id}] {st.title}\nSeed: {st.directive_seed}\n"]
    if prior is not None:
        diagnostics, refined = prior
        parts.append(
            "Previous attempt failed."
            f" Root cause: {diagnostics.root_cause}."
            f" Refinement: {refined}\n"
        )
    if fault:
        parts.append(f"Regeneration needed: {fault}\n")
    parts.append("Write the specification for this subtask.\n")
    return "".join(parts)


def verdict_context(workspace_ctx: str, st: SubTask, result: CoderResult,
                    retries_left: int) -> str:
    d = result.diagnostics
    return (
        f"{workspace_ctx}"
        f"Subtask [{st.id}] {st.title} failed.\n"
        f"Root cause: {d.root_cause}\n"
        f"Failed operation: {d.failed_operation}\n"
        f"Worker hint recoverable: {d.recoverable_hint}\n"
        f"Retries left: {retries_left}\n"
        "Decide: retry with a refined directive, or replan.\n"
    )


def render_spec(spec: Specification) -> str:
    lines = [f"Subtask: {spec.subtask_id}", f"Directive: {spec.directive}"]
    if spec.inputs:
        lines.append("Inputs:")
        for b in spec.inputs:
            sample = f" sample={render_preview(b.sample)}" if b.sample is not None else ""
            lines.append(f"  {b.name}: {render_annotation(b.annotation)}{sample}")
    if spec.returns:
        lines.append("Returns:")
        for f in spec.returns:
            lines.append(f"  {f.name}: {render_annotation(f.annotation)}")
    return "\n".join(lines) + "\n"


def coder_context(spec: Specification, history) -> str:
    parts = [render_spec(spec)]
    for outcome in history:
        parts.append(f"--- cell {outcome.cell_index} ---\n")
        if outcome.stdout:
            parts.append(outcome.stdout)
            if not outcome.stdout.endswith("\n"):
                parts.append("\n")
        if outcome.error is not None:
            parts.append(f"error {outcome.error.kind}: {outcome.error.message}\n")
    parts.append("Next action?\n")
    return "".join(parts)


# ---------------------------------------------------------------------------
# Delegator behaviors
# ---------------------------------------------------------------------------


def decompose(task: str, policy) -> Plan:
    if not task:
        raise ValueError("task must be non-empty")
    action = _propose(policy, DELEGATOR, decompose_context(task), frozenset({"plan"}))
    subtasks = []
    for i, seed in enumerate(action.seeds):
        subtasks.append(SubTask(
            id=seed.id if seed.id is not None else f"s{i + 1}",
            title=seed.title,
            directive_seed=seed.directive_seed,
            order_index=i,
        ))
    try:
        return Plan(subtasks=subtasks)
    except WorkspaceError as exc:  # duplicate ids and the like are policy faults
        raise ProtocolViolation(f"policy proposed an invalid plan: {exc}") from None


@dataclass(frozen=True)
class DelegationFault:
    """The policy proposed a spec that does not resolve against the
    workspace, twice. Treated as a subtask failure upstream."""

    diagnostics: Diagnostics


def gen_spec(st: SubTask, workspace: Workspace, prior, policy, planning_ctx=None):
    """Build a validated Specification for a pending (or retried) subtask.

    One free regeneration is allowed when the policy references an unknown
    artifact; a second miss becomes a DelegationFault rather than burning the
    worker budget. ``planning_ctx`` overrides the workspace rendering (used by
    the free-text ablation mode).
    """
    ctx = workspace.planning_context() if planning_ctx is None else planning_ctx
    fault = ""
    for _attempt in range(2):
        action = _propose(
            policy, DELEGATOR, spec_context(ctx, st, prior, fault), frozenset({"spec"})
        )
        unresolved = [n for n in action.input_names if not workspace.has_artifact(n)]
        if unresolved:
            fault = f"unresolved artifact references: {', '.join(unresolved)}"
            continue
        bindings = []
        for name in action.input_names:
            value, annotation = workspace.resolve(name)
            bindings.append(InputBinding(
                name=name, artifact_name=name, annotation=annotation,
                sample=preview(value),
            ))
        try:
            spec = Specification(
                subtask_id=st.id, directive=action.directive,
                inputs=tuple(bindings), returns=tuple(action.returns),
            )
        except SchemaError as exc:
            raise ProtocolViolation(f"policy proposed an invalid spec: {exc}") from None
        report = validate_specification(spec, workspace.visible_annotations())
        if not report.ok:
            fault = "; ".join(i.message for i in report.issues)
            continue
        return spec
    return DelegationFault(Diagnostics(
        root_cause="delegation_fault",
        failed_operation=fault,
        recoverable_hint=True,
    ))


# ---------------------------------------------------------------------------
# Coder behavior
# ---------------------------------------------------------------------------


def coder_run(spec: Specification, session: SandboxSession, policy,
              iteration_budget: int, predicates=None, context_fn=None,
              validate: bool = True):
    """Generate-execute-refine loop, at most ``iteration_budget`` code cells.

    Ends early on a validated full set of outputs (success) or on the policy
    reporting it cannot recover (fail). Exhaustion fails with the last cell's
    error only; the transcript stays in the session. Returns
    (CoderResult, extracted values or None). The caller disposes the session.

    ``context_fn`` overrides the context rendering and ``validate=False``
    drops schema validation to bare name presence; both exist for the
    free-text ablation mode.
    """
    if iteration_budget < 1:
        raise ValueError("iteration budget must be at least 1")
    render = context_fn if context_fn is not None else coder_context
    history: list = []
    values = None
    last_error = None
    for _i in range(iteration_budget):
        try:
            action = _propose(
                policy, CODER, render(spec, history), frozenset({"code", "report"})
            )
            if isinstance(action, ResultReport):
                if action.diagnostics is None:
                    raise ProtocolViolation(
                        "worker reported success before outputs were verified"
                    )
                return CoderResult(
                    subtask_id=spec.subtask_id, status=FAIL,
                    summary=action.summary, diagnostics=action.diagnostics,
                ), None
            outcome = session.execute_cell(action.source)
            history.append(outcome)
            if outcome.error is not None:
                last_error = outcome.error
                continue
            extracted = _try_extract(spec, session, predicates, validate)
            if extracted is not None:
                values = extracted
                break
        except ExecutorError as exc:
            return CoderResult(
                subtask_id=spec.subtask_id, status=FAIL,
                summary="execution environment failed",
                diagnostics=Diagnostics(
                    root_cause="infrastructure",
                    failed_operation=str(exc),
                    recoverable_hint=True,
                ),
            ), None
    if values is None:
        failed_op = f"{last_error.kind}: {last_error.message}" if last_error else (
            "outputs never satisfied the return schema"
        )
        # Only the last cell's error rides upward; the transcript does not.
        return CoderResult(
            subtask_id=spec.subtask_id, status=FAIL,
            summary="iteration budget exhausted",
            diagnostics=Diagnostics(
                root_cause="budget_exhausted",
                failed_operation=failed_op,
                recoverable_hint=None,
            ),
        ), None
    done_ctx = render(spec, history) + "All outputs verified. Report the outcome.\n"
    report = _propose(policy, CODER, done_ctx, frozenset({"report"}))
    if report.diagnostics is not None:
        raise ProtocolViolation("success report must not carry diagnostics")
    artifacts = tuple(
        (f.name, f"{session.session_id}:{f.name}") for f in spec.returns
    )
    result = CoderResult(
        subtask_id=spec.subtask_id, status=SUCCESS,
        artifacts=artifacts, summary=report.summary,
    )
    return result, values


def _try_extract(spec: Specification, session: SandboxSession, predicates,
                 validate: bool = True):
    """Quietly check whether the session satisfies the return schema."""
    from .sandbox import ExtractionError

    try:
        values = session.extract_artifacts(spec.returns)
    except ExtractionError:
        return None
    if not validate:
        return values
    candidate = CoderResult(
        subtask_id=spec.subtask_id, status=SUCCESS,
        artifacts=tuple((f.name, f.name) for f in spec.returns),
        summary="pending",
    )
    report = validate_result(candidate, spec.returns, values.__getitem__, predicates)
    return values if report.ok else None


# ---------------------------------------------------------------------------
# Assessment
# ---------------------------------------------------------------------------


def assess(result: CoderResult, st: SubTask, retry_count: int, retry_budget: int,
           policy, escalate: bool, workspace_ctx: str) -> Decision:
    """Proceed on validated success without consulting the policy; on failure
    the policy votes retry or replan, and in escalate mode a retry vote past
    the budget is clamped to a replan that reformulates the subtask."""
    if result.status == SUCCESS:
        return Decision(verdict=PROCEED, rationale="outputs validated")
    retries_left = max(retry_budget - retry_count, 0)
    action = _propose(
        policy, DELEGATOR,
        verdict_context(workspace_ctx, st, result, retries_left),
        frozenset({"verdict"}),
    )
    decision = action.decision
    if decision.verdict == PROCEED:
        raise ProtocolViolation("policy voted proceed on a failed result")
    if decision.verdict == RETRY and escalate and retry_count >= retry_budget:
        return Decision(
            verdict=REPLAN,
            rationale=f"retry budget exhausted; reformulating ({decision.rationale})",
            edit=ReplanEdit(
                target_id=st.id,
                replacements=(SubTaskSeed(
                    title=st.title,
                    directive_seed=decision.refined_directive,
                ),),
                note="escalated from exhausted retries",
            ),
        )
    return decision
