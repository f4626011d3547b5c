"""Delegation runtime: a persistent planner supervising ephemeral, isolated
execution sessions through typed messages and a dual-layer workspace.

Public surface re-exported here: the value model, wire messages and codec,
workspace, sandbox executors, agent behaviors, the protocol engine with its
conformance oracle, policy backends, and the suite harness.
"""

from .values import (  # noqa: F401
    NULL,
    TypeAnnotation,
    VBool,
    VFloat,
    VInt,
    VList,
    VNull,
    VRecord,
    VTable,
    VText,
    Value,
    annotate,
    conforms,
    from_py,
    to_py,
)
from .messages import (  # noqa: F401
    CoderResult,
    Decision,
    Diagnostics,
    InputBinding,
    Named,
    NoNullsInColumn,
    NonEmpty,
    ReplanEdit,
    ReturnField,
    RowsAtLeast,
    RowsAtMost,
    ShapeEquals,
    Specification,
    SubTaskSeed,
    TypeMatches,
    ValidationReport,
    validate_result,
    validate_specification,
)
from .codec import DecodeError, decode_message, encode_message  # noqa: F401
from .workspace import Plan, SubTask, Workspace  # noqa: F401
from .sandbox import (  # noqa: F401
    BuiltinExecutor,
    CellOutcome,
    ExecutorError,
    KernelExecutor,
    SandboxSession,
)
from .agents import (  # noqa: F401
    Code,
    PlanProposal,
    ProtocolViolation,
    ResultReport,
    SpecProposal,
    Verdict,
    assess,
    coder_run,
    decompose,
    gen_spec,
)
from .protocol import (  # noqa: F401
    BudgetExceeded,
    Budgets,
    Completed,
    EngineError,
    Failure,
    RunResult,
    RunTrace,
    run,
)
from .oracle import Scenario, conformance_oracle, enumerate_scenarios  # noqa: F401
from .policies import LlmConfig, LlmPolicy, ScriptStep, ScriptedPolicy  # noqa: F401
from .harness import (  # noqa: F401
    RunConfig,
    RunRecord,
    Suite,
    TaskDefinition,
    context_proxy,
    load_suite,
    pass_hat_k,
    run_suite,
    stratify,
)

__version__ = "0.1.0"
