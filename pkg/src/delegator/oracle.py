"""Ground-truth model of the execution protocol, and the bounded scenario
space it is checked against.

The oracle is a direct transliteration of the dispatch/retry/replan control
flow over a table of scripted per-attempt outcomes: no agents, no sandboxes,
no policies. It produces the exact event sequence (dispatch, retry, replan,
commit) and terminal outcome for a scenario; the engine, driven by a scripted
policy realizing the same scenario, must match event for event.

Scenario vocabulary per attempt: "S" success, "FR" recoverable failure
(planner votes retry), "FU" unrecoverable failure (planner votes replan).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

__all__ = [
    "Scenario",
    "OUTCOMES",
    "conformance_oracle",
    "enumerate_scenarios",
]

OUTCOMES = ("S", "FR", "FU")

STRICT = "strict_alg1"
ESCALATE = "escalate_to_replan"


@dataclass(frozen=True)
class Scenario:
    mode: str
    retries: int
    coder_iterations: int
    replans: int
    subtasks: tuple
    outcomes: dict  # slot id -> tuple of attempt outcomes, exactly as consumed
    dispatch_rounds: int = 100
    split: int = 1  # replacements per replan edit

    def key(self) -> tuple:
        return (
            self.mode, self.retries, self.coder_iterations, self.replans,
            self.dispatch_rounds, self.split, self.subtasks,
            tuple(sorted((k, v) for k, v in self.outcomes.items())),
        )


def _children(target: str, ordinal: int, split: int) -> list:
    # Same trivial naming rule the workspace uses for id-less replacement
    # seeds; restated here so the oracle does not import the engine path.
    if split == 1:
        return [f"{target}.r{ordinal}"]
    return [f"{target}.r{ordinal}.{k}" for k in range(1, split + 1)]


def conformance_oracle(sc: Scenario):
    """Return ((outcome_tag, detail), events) for a scenario.

    outcome_tag is completed/failure/budget_exceeded; detail is the failing
    subtask id or the exhausted budget name.
    """
    plan = list(sc.subtasks)
    done: set = set()
    events: list = []
    dispatches = 0
    replans_used = 0
    while True:
        current = next((sid for sid in plan if sid not in done), None)
        if current is None:
            return ("completed", None), events
        attempt = 0
        while True:
            if dispatches >= sc.dispatch_rounds:
                return ("budget_exceeded", "dispatch_rounds"), events
            dispatches += 1
            events.append(("dispatch", current))
            out = sc.outcomes[current][attempt]
            if out == "S":
                events.append(("commit", current))
                done.add(current)
                break
            if out == "FR" and attempt < sc.retries:
                events.append(("retry", current))
                attempt += 1
                continue
            if out == "FR" and sc.mode == STRICT:
                # the retry loop ended unresolved
                return ("failure", current), events
            # a replan is demanded: unrecoverable failure, or exhausted
            # retries escalating
            if replans_used >= sc.replans:
                return ("failure", current), events
            replans_used += 1
            events.append(("replan", current))
            children = _children(current, replans_used, sc.split)
            i = plan.index(current)
            plan[i:i + 1] = children
            break


# ---------------------------------------------------------------------------
# Bounded exhaustive enumeration
# ---------------------------------------------------------------------------


def enumerate_scenarios(max_subtasks: int = 3, retries_values=(0, 1, 2),
                        iteration_values=(1, 2), replans_values=(0, 1, 2),
                        modes=(STRICT, ESCALATE)):
    """Yield every scenario in the bounded space, suffix-free: outcomes are
    assigned lazily, so only attempts the protocol actually consumes branch.

    Replacement subtasks branch over the same outcome alphabet; each replan
    introduces a single replacement (two-way splits are exercised by targeted
    scenarios elsewhere).
    """
    for mode, retries, iters, replans in product(
        modes, retries_values, iteration_values, replans_values
    ):
        for n in range(max_subtasks + 1):
            subtasks = tuple(f"s{i + 1}" for i in range(n))
            yield from _walk(mode, retries, iters, replans, subtasks)


def _walk(mode, retries, iters, replans, subtasks):
    """DFS over lazily assigned outcomes, mirroring the oracle control flow."""

    def rec(plan, done, outcomes, replans_used):
        current = next((sid for sid in plan if sid not in done), None)
        if current is None:
            yield dict(outcomes)
            return
        yield from attempts(plan, done, outcomes, replans_used, current, 0)

    def attempts(plan, done, outcomes, replans_used, current, attempt):
        for out in OUTCOMES:
            assigned = dict(outcomes)
            assigned[current] = outcomes.get(current, ()) + (out,)
            if out == "S":
                yield from rec(plan, done | {current}, assigned, replans_used)
            elif out == "FR" and attempt < retries:
                yield from attempts(plan, done, assigned, replans_used, current, attempt + 1)
            elif out == "FR" and mode == STRICT:
                yield assigned  # terminal failure
            elif replans_used >= replans:
                yield assigned  # terminal failure (no replan budget)
            else:
                child = _children(current, replans_used + 1, 1)[0]
                i = plan.index(current)
                new_plan = plan[:i] + [child] + plan[i + 1:]
                yield from rec(new_plan, done, assigned, replans_used + 1)

    for outcomes in rec(list(subtasks), set(), {}, 0):
        yield Scenario(
            mode=mode, retries=retries, coder_iterations=iters,
            replans=replans, subtasks=subtasks,
            outcomes={k: tuple(v) for k, v in outcomes.items()},
        )
