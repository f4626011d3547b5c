"""Suite runner, metrics, and reports.

Tasks are hermetic documents: statement, embedded initial artifacts in the
canonical value encoding, named-predicate references, a success check over
final committed artifacts, and (for scripted runs) a registered policy name.
A task counts as a success only when the run completed AND every success
condition validates — outcome alone is not enough.

Metrics: pass^k estimated as C(c,k)/C(n,k); complexity stratification from
success rates (>=75% Low, <=25% High, Medium between); context length proxy
in characters of delegator-side policy contexts.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

from . import fixtures
from .codec import (
    canonical_dumps,
    condition_from_obj,
    condition_to_obj,
    value_from_obj,
    value_to_obj,
)
from .messages import condition_error
from .policies import ScriptedPolicy, LlmConfig, LlmPolicy
from .protocol import (
    Budgets,
    BudgetExceeded,
    Completed,
    EngineError,
    Failure,
    RunResult,
    run,
)
from .sandbox import BuiltinExecutor, KernelExecutor

__all__ = [
    "TaskDefinition",
    "Suite",
    "RunConfig",
    "RunRecord",
    "SuiteLoadError",
    "load_suite",
    "dump_suite",
    "run_suite",
    "run_task_once",
    "pass_hat_k",
    "stratify",
    "context_proxy",
    "report_text",
    "write_records",
    "read_records",
    "register_predicate",
    "register_script",
    "PREDICATES",
    "SCRIPTS",
    "outcome_exit_code",
]


class SuiteLoadError(Exception):
    def __init__(self, message: str, task_ids=()):
        self.task_ids = tuple(task_ids)
        super().__init__(message)


# Named predicates must be registered before use; unknown ids are validation
# failures, never silently true.
PREDICATES: dict = {}

# Scripted policy factories: name -> fn(task, seed) -> policy.
SCRIPTS: dict = {}


def register_predicate(name: str, fn):
    PREDICATES[name] = fn


def register_script(name: str, factory):
    SCRIPTS[name] = factory


@dataclass(frozen=True)
class TaskDefinition:
    id: str
    statement: str
    initial_artifacts: tuple = ()  # (name, Value) pairs
    predicates: tuple = ()  # names into the registry
    success_check: tuple = ()  # (artifact_name, ValidationCondition) pairs
    scripted_policy: str | None = None

    def artifacts_map(self) -> dict:
        return dict(self.initial_artifacts)


@dataclass(frozen=True)
class Suite:
    name: str
    tasks: tuple


@dataclass
class RunConfig:
    mode: str = "full"
    executor: str = "builtin"
    kernel_command: tuple = ()
    escalation: str = "escalate_to_replan"
    budgets: Budgets = field(default_factory=Budgets)
    policy_backend: str = "scripted"
    llm: LlmConfig | None = None
    n_runs: int = 4  # mirrors k in 1..4 reporting
    workers: int = 1
    journal_dir: str | None = None

    @classmethod
    def from_obj(cls, obj: dict) -> "RunConfig":
        budgets = Budgets(**obj.get("budgets", {}))
        llm = None
        if "llm" in obj:
            llm = LlmConfig(**obj["llm"])
        return cls(
            mode=obj.get("mode", "full"),
            executor=obj.get("executor", "builtin"),
            kernel_command=tuple(obj.get("kernel_command", ())),
            escalation=obj.get("escalation", "escalate_to_replan"),
            budgets=budgets,
            policy_backend=obj.get("policy_backend", "scripted"),
            llm=llm,
            n_runs=obj.get("n_runs", 4),
            workers=obj.get("workers", 1),
            journal_dir=obj.get("journal_dir"),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_obj(json.load(fh))


# ---------------------------------------------------------------------------
# Suite files
# ---------------------------------------------------------------------------


def task_to_obj(task: TaskDefinition) -> dict:
    return {
        "id": task.id,
        "statement": task.statement,
        "initial_artifacts": {n: value_to_obj(v) for n, v in task.initial_artifacts},
        "predicates": list(task.predicates),
        "success_check": [
            {"artifact": name, "condition": condition_to_obj(cond)}
            for name, cond in task.success_check
        ],
        "scripted_policy": task.scripted_policy,
    }


def task_from_obj(obj: dict) -> TaskDefinition:
    artifacts = tuple(
        (n, value_from_obj(v, f"$.initial_artifacts.{n}"))
        for n, v in obj.get("initial_artifacts", {}).items()
    )
    checks = tuple(
        (c["artifact"], condition_from_obj(c["condition"], "$.success_check"))
        for c in obj.get("success_check", [])
    )
    return TaskDefinition(
        id=obj["id"],
        statement=obj["statement"],
        initial_artifacts=artifacts,
        predicates=tuple(obj.get("predicates", [])),
        success_check=checks,
        scripted_policy=obj.get("scripted_policy"),
    )


def load_suite(path) -> Suite:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SuiteLoadError(f"cannot read suite {path}: {exc}") from None
    tasks = []
    bad = []
    seen = set()
    for raw in obj.get("tasks", []):
        tid = raw.get("id", "?")
        try:
            task = task_from_obj(raw)
        except Exception as exc:
            bad.append((tid, str(exc)))
            continue
        if task.id in seen:
            bad.append((tid, "duplicate task id"))
            continue
        seen.add(task.id)
        tasks.append(task)
    if bad:
        detail = "; ".join(f"{tid}: {msg}" for tid, msg in bad)
        raise SuiteLoadError(f"malformed tasks: {detail}", [tid for tid, _ in bad])
    return Suite(name=obj.get("suite", "suite"), tasks=tuple(tasks))


def dump_suite(suite: Suite) -> str:
    return canonical_dumps({
        "suite": suite.name,
        "tasks": [task_to_obj(t) for t in suite.tasks],
    })


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    task_id: str
    seed: int
    outcome_kind: str
    outcome_detail: str
    success: bool
    dispatches: int
    retries: int
    replans: int
    coder_iterations: int
    context_chars: int
    error_count: int

    def to_obj(self) -> dict:
        return {
            "task_id": self.task_id,
            "seed": self.seed,
            "outcome_kind": self.outcome_kind,
            "outcome_detail": self.outcome_detail,
            "success": self.success,
            "dispatches": self.dispatches,
            "retries": self.retries,
            "replans": self.replans,
            "coder_iterations": self.coder_iterations,
            "context_chars": self.context_chars,
            "error_count": self.error_count,
        }

    @classmethod
    def from_obj(cls, obj) -> "RunRecord":
        return cls(**obj)


def write_records(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(canonical_dumps(r.to_obj()) + "\n")


def read_records(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_obj(json.loads(line)))
    return records


def outcome_exit_code(outcome) -> int:
    if isinstance(outcome, Completed):
        return 0
    if isinstance(outcome, Failure):
        return 1
    if isinstance(outcome, BudgetExceeded):
        return 2
    return 3


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _policy_for(task: TaskDefinition, config: RunConfig, seed: int):
    if config.policy_backend == "llm":
        if config.llm is None:
            raise SuiteLoadError("llm backend selected but no llm config given")
        return LlmPolicy(config.llm)
    name = task.scripted_policy
    if name is None:
        raise SuiteLoadError(f"task {task.id} names no scripted policy", [task.id])
    factory = SCRIPTS.get(name)
    if factory is None:
        raise SuiteLoadError(f"unknown scripted policy {name!r}", [task.id])
    return factory(task, seed)


def _executor_for(config: RunConfig):
    if config.executor == "kernel":
        if not config.kernel_command:
            raise SuiteLoadError("kernel executor selected but no kernel_command")
        return KernelExecutor(list(config.kernel_command))
    return BuiltinExecutor()


def _check_success(result: RunResult, task: TaskDefinition) -> bool:
    if not isinstance(result.outcome, Completed):
        return False
    registry = {name: PREDICATES[name] for name in task.predicates if name in PREDICATES}
    ws = result.workspace
    for artifact_name, condition in task.success_check:
        if not ws.has_artifact(artifact_name):
            return False
        value, annotation = ws.resolve(artifact_name)
        if condition_error(condition, value, annotation, registry) is not None:
            return False
    return True


def run_task_once(task: TaskDefinition, config: RunConfig, seed: int) -> tuple:
    """One run of one task; returns (RunRecord, RunResult)."""
    policy = _policy_for(task, config, seed)
    executor = _executor_for(config)
    journal_path = None
    if config.journal_dir:
        os.makedirs(config.journal_dir, exist_ok=True)
        journal_path = os.path.join(config.journal_dir, f"{task.id}_{seed}.jsonl")
    registry = {name: PREDICATES[name] for name in task.predicates if name in PREDICATES}
    result = run(
        task=task.statement,
        budgets=config.budgets,
        policy=policy,
        executor=executor,
        mode=config.mode,
        escalation=config.escalation,
        journal_path=journal_path,
        initial_artifacts=task.artifacts_map(),
        predicates=registry,
    )
    outcome = result.outcome
    kind = type(outcome).__name__
    detail = ""
    if isinstance(outcome, Failure):
        detail = outcome.subtask_id
    elif isinstance(outcome, BudgetExceeded):
        detail = outcome.budget
    elif isinstance(outcome, EngineError):
        detail = outcome.message
    record = RunRecord(
        task_id=task.id,
        seed=seed,
        outcome_kind=kind,
        outcome_detail=detail,
        success=_check_success(result, task),
        dispatches=result.trace.dispatches,
        retries=result.trace.retries,
        replans=result.trace.replans,
        coder_iterations=result.trace.coder_iterations,
        context_chars=context_proxy(result.trace),
        error_count=result.trace.error_count,
    )
    return record, result


def run_suite(suite: Suite, config: RunConfig, out_dir=None):
    """Execute n_runs per task; return (records, report text)."""
    jobs = [(task, seed) for task in suite.tasks for seed in range(config.n_runs)]

    def one(job):
        task, seed = job
        record, _result = run_task_once(task, config, seed)
        return record

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(one, jobs))
    else:
        records = [one(job) for job in jobs]
    report = report_text(records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_records(records, os.path.join(out_dir, "records.jsonl"))
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report)
    return records, report


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def pass_hat_k(n: int, c: int, k: int) -> float:
    """Probability that k uniformly chosen distinct runs all succeeded."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c} n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k} n={n}")
    if c < k:
        return 0.0
    return comb(c, k) / comb(n, k)


def stratify(records) -> dict:
    """Success-rate complexity levels per task: Low >= 75%, High <= 25%,
    Medium strictly between."""
    by_task: dict = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r.success)
    levels = {}
    for task_id, flags in by_task.items():
        sr = sum(flags) / len(flags)
        if sr >= 0.75:
            levels[task_id] = "Low"
        elif sr <= 0.25:
            levels[task_id] = "High"
        else:
            levels[task_id] = "Medium"
    return levels


def context_proxy(trace) -> int:
    """Character proxy for planner context cost: total characters of every
    delegator-role policy context over the run. A tokenizer hook can replace
    characters with tokens without touching callers."""
    return trace.delegator_context_chars


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def report_text(records) -> str:
    """Plain-text report; byte-stable for identical records (no timestamps)."""
    by_task: dict = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
    levels = stratify(records)
    header = (
        f"{'task':<24} {'runs':>4} {'succ':>4} "
        f"{'pass^1':>7} {'pass^2':>7} {'pass^3':>7} {'pass^4':>7} "
        f"{'level':<7} {'ctx_chars':>10} {'errors':>6}"
    )
    lines = [header, "-" * len(header)]
    for task_id in sorted(by_task):
        rs = by_task[task_id]
        n = len(rs)
        c = sum(1 for r in rs if r.success)
        cells = []
        for k in (1, 2, 3, 4):
            cells.append(f"{pass_hat_k(n, c, k):.4f}" if k <= n else "-")
        mean_ctx = sum(r.context_chars for r in rs) // n
        mean_err = sum(r.error_count for r in rs) / n
        lines.append(
            f"{task_id:<24} {n:>4} {c:>4} "
            f"{cells[0]:>7} {cells[1]:>7} {cells[2]:>7} {cells[3]:>7} "
            f"{levels[task_id]:<7} {mean_ctx:>10} {mean_err:>6.2f}"
        )
    total = len(records)
    succ = sum(1 for r in records if r.success)
    lines.append("-" * len(header))
    lines.append(f"total runs {total}, successes {succ}")
    return "\n".join(lines) + "\n"


# Built-in scripted policies.
register_script("pricing", lambda task, seed: ScriptedPolicy(fixtures.pricing_script()))
register_script(
    "pricing_plain",
    lambda task, seed: ScriptedPolicy(fixtures.pricing_script(with_predicates=False)),
)
