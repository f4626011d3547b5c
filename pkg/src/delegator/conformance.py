"""Bridge from scenario tables to real engine runs.

Builds the scripted policy that realizes a scenario (plan proposal, one spec
per dispatch, worker actions per attempt outcome, verdicts on failures), runs
the engine with it, and compares outcome and event sequence against the
oracle. The acceptance suite sweeps the full bounded space through here.
"""

from __future__ import annotations

from .agents import Code, PlanProposal, ResultReport, SpecProposal, Verdict
from .messages import (
    Decision,
    Diagnostics,
    REPLAN,
    RETRY,
    ReplanEdit,
    ReturnField,
    SubTaskSeed,
)
from .oracle import Scenario, conformance_oracle
from .policies import ScriptStep, ScriptedPolicy
from .protocol import (
    BudgetExceeded,
    Budgets,
    Completed,
    Failure,
    RunResult,
    run,
)
from .sandbox import BuiltinExecutor
from .values import TypeAnnotation

DELEGATOR = "delegator"
CODER = "coder"


def _out_name(slot_id: str) -> str:
    return "out_" + slot_id.replace(".", "_")


def scenario_script(sc: Scenario) -> list:
    """Script realizing a scenario: actions in exactly the order the engine
    will ask for them, derived by replaying the oracle's event stream."""
    steps = [ScriptStep(DELEGATOR, PlanProposal(seeds=tuple(
        SubTaskSeed(title=f"task {sid}", directive_seed=f"seed {sid}", id=sid)
        for sid in sc.subtasks
    )))]
    (_outcome, _detail), events = conformance_oracle(sc)
    attempt_index: dict = {}
    for kind, sid in events:
        if kind == "dispatch":
            attempt = attempt_index.get(sid, 0)
            attempt_index[sid] = attempt + 1
            steps.append(ScriptStep(DELEGATOR, SpecProposal(
                directive=f"do {sid} attempt {attempt}",
                input_names=(),
                returns=(ReturnField(_out_name(sid), TypeAnnotation("int")),),
            )))
            out = sc.outcomes[sid][attempt]
            if out == "S":
                steps.append(ScriptStep(CODER, Code(f"let {_out_name(sid)} = 1")))
                steps.append(ScriptStep(CODER, ResultReport(f"completed {sid}")))
            elif out == "FR":
                steps.append(ScriptStep(CODER, ResultReport(
                    "cannot finish",
                    diagnostics=Diagnostics(
                        root_cause="ambiguous specification",
                        failed_operation="interpreting the directive",
                        recoverable_hint=True,
                    ),
                )))
                steps.append(ScriptStep(DELEGATOR, Verdict(Decision(
                    verdict=RETRY,
                    rationale="refinable",
                    refined_directive=f"refine {sid} attempt {attempt}",
                ))))
            else:  # FU
                steps.append(ScriptStep(CODER, ResultReport(
                    "cannot finish",
                    diagnostics=Diagnostics(
                        root_cause="structural mismatch",
                        failed_operation="the decomposition itself",
                        recoverable_hint=False,
                    ),
                )))
                steps.append(ScriptStep(DELEGATOR, Verdict(Decision(
                    verdict=REPLAN,
                    rationale="needs a different decomposition",
                    edit=ReplanEdit(
                        target_id=sid,
                        replacements=tuple(
                            SubTaskSeed(
                                title=f"rework {sid}",
                                directive_seed=f"rework {sid} part {k + 1}",
                            )
                            for k in range(sc.split)
                        ),
                    ),
                ))))
    return steps


def run_scenario(sc: Scenario, capture_contexts: bool = False) -> RunResult:
    policy = ScriptedPolicy(scenario_script(sc))
    budgets = Budgets(
        retries=sc.retries,
        coder_iterations=sc.coder_iterations,
        dispatch_rounds=sc.dispatch_rounds,
        replans=sc.replans,
    )
    return run(
        task=f"scenario over {len(sc.subtasks)} subtasks",
        budgets=budgets,
        policy=policy,
        executor=BuiltinExecutor(),
        mode="full",
        escalation=sc.mode,
        capture_contexts=capture_contexts,
    )


def outcome_tag(outcome) -> tuple:
    if isinstance(outcome, Completed):
        return ("completed", None)
    if isinstance(outcome, Failure):
        return ("failure", outcome.subtask_id)
    if isinstance(outcome, BudgetExceeded):
        return ("budget_exceeded", outcome.budget)
    return ("engine_error", str(outcome))


def check_scenario(sc: Scenario):
    """Run engine and oracle on one scenario; return (ok, detail)."""
    expected, expected_events = conformance_oracle(sc)
    result = run_scenario(sc)
    got = outcome_tag(result.outcome)
    if got != expected:
        return False, f"outcome mismatch: engine={got} oracle={expected} sc={sc}"
    if result.trace.events != expected_events:
        return False, (
            f"event mismatch for {sc}:\n"
            f"  engine: {result.trace.events}\n  oracle: {expected_events}"
        )
    budgets_ok = (
        result.trace.dispatches <= sc.dispatch_rounds
        and result.trace.replans <= sc.replans
        and result.trace.sessions_spawned == result.trace.sessions_disposed
    )
    if not budgets_ok:
        return False, f"budget or disposal violation for {sc}: {result.trace}"
    return True, ""
