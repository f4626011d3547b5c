"""Wire message types and schema validation.

Exactly two messages cross the planner/worker boundary: the downward
Specification (directive, typed input bindings, return schema) and the upward
CoderResult (status, artifact references, summary, diagnostics). The planner's
post-result Decision is the third encodable type. All are immutable and
enforce their invariants at construction, so an instance in hand is valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .values import (
    TypeAnnotation,
    Value,
    conformance_error,
    is_identifier,
    kind_of,
)

__all__ = [
    "SchemaError",
    "TypeMatches",
    "NonEmpty",
    "ShapeEquals",
    "RowsAtMost",
    "RowsAtLeast",
    "NoNullsInColumn",
    "Named",
    "ValidationCondition",
    "InputBinding",
    "ReturnField",
    "Specification",
    "Diagnostics",
    "CoderResult",
    "SubTaskSeed",
    "ReplanEdit",
    "Decision",
    "Issue",
    "ValidationReport",
    "SUCCESS",
    "FAIL",
    "PROCEED",
    "RETRY",
    "REPLAN",
    "validate_specification",
    "validate_result",
    "condition_error",
]

SUCCESS = "success"
FAIL = "fail"

PROCEED = "proceed"
RETRY = "retry"
REPLAN = "replan"


class SchemaError(ValueError):
    """A message violates one of its structural invariants."""


# ---------------------------------------------------------------------------
# Validation conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeMatches:
    pass


@dataclass(frozen=True)
class NonEmpty:
    pass


@dataclass(frozen=True)
class ShapeEquals:
    rows: int
    cols: int


@dataclass(frozen=True)
class RowsAtMost:
    n: int


@dataclass(frozen=True)
class RowsAtLeast:
    n: int


@dataclass(frozen=True)
class NoNullsInColumn:
    column: str


@dataclass(frozen=True)
class Named:
    predicate_id: str


ValidationCondition = Union[
    TypeMatches, NonEmpty, ShapeEquals, RowsAtMost, RowsAtLeast, NoNullsInColumn, Named
]


def condition_error(
    condition: ValidationCondition,
    value: Value,
    annotation: TypeAnnotation,
    predicates: Mapping[str, Callable] | None = None,
) -> str | None:
    """Return a failure message, or None when the condition holds.

    Unknown Named predicates are a validation failure naming the predicate;
    they are never silently true.
    """
    from .values import VList, VRecord, VTable, VText, VNull

    if isinstance(condition, TypeMatches):
        return conformance_error(value, annotation)
    if isinstance(condition, NonEmpty):
        if isinstance(value, VTable):
            return None if value.rows else "table has no rows"
        if isinstance(value, VList):
            return None if value.items else "list is empty"
        if isinstance(value, VText):
            return None if value.s else "text is empty"
        if isinstance(value, VRecord):
            return None if value.fields else "record has no fields"
        return f"NonEmpty does not apply to {kind_of(value)}"
    if isinstance(condition, ShapeEquals):
        if not isinstance(value, VTable):
            return f"ShapeEquals does not apply to {kind_of(value)}"
        if value.shape != (condition.rows, condition.cols):
            return (
                f"expected shape {condition.rows}x{condition.cols}, "
                f"got {value.shape[0]}x{value.shape[1]}"
            )
        return None
    if isinstance(condition, RowsAtMost):
        if not isinstance(value, VTable):
            return f"RowsAtMost does not apply to {kind_of(value)}"
        return None if len(value.rows) <= condition.n else (
            f"{len(value.rows)} rows exceeds limit {condition.n}"
        )
    if isinstance(condition, RowsAtLeast):
        if not isinstance(value, VTable):
            return f"RowsAtLeast does not apply to {kind_of(value)}"
        return None if len(value.rows) >= condition.n else (
            f"{len(value.rows)} rows is below minimum {condition.n}"
        )
    if isinstance(condition, NoNullsInColumn):
        if not isinstance(value, VTable):
            return f"NoNullsInColumn does not apply to {kind_of(value)}"
        if condition.column not in value.columns:
            return f"missing column {condition.column!r}"
        col = value.column_index(condition.column)
        for i, row in enumerate(value.rows):
            if isinstance(row[col], VNull):
                return f"null in column {condition.column!r} at row {i}"
        return None
    if isinstance(condition, Named):
        registry = predicates or {}
        fn = registry.get(condition.predicate_id)
        if fn is None:
            return f"unknown predicate {condition.predicate_id!r}"
        try:
            ok = bool(fn(value))
        except Exception as exc:  # predicate bugs are validation failures
            return f"predicate {condition.predicate_id!r} raised: {exc}"
        return None if ok else f"predicate {condition.predicate_id!r} rejected value"
    raise SchemaError(f"unknown condition {condition!r}")


# ---------------------------------------------------------------------------
# Downward message: Specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputBinding:
    """A named reference into the committed artifact store, annotated and
    accompanied by a truncated sample preview."""

    name: str
    artifact_name: str
    annotation: TypeAnnotation
    sample: Value | None = None

    def __post_init__(self):
        if not is_identifier(self.name):
            raise SchemaError(f"binding name {self.name!r} is not an identifier")
        if self.sample is not None and self.annotation.kind != "any":
            if kind_of(self.sample) != self.annotation.kind:
                raise SchemaError(
                    f"sample for {self.name!r} is {kind_of(self.sample)}, "
                    f"annotation says {self.annotation.kind}"
                )


@dataclass(frozen=True)
class ReturnField:
    name: str
    annotation: TypeAnnotation
    conditions: tuple = ()

    def __post_init__(self):
        if not is_identifier(self.name):
            raise SchemaError(f"return name {self.name!r} is not an identifier")


@dataclass(frozen=True)
class Specification:
    subtask_id: str
    directive: str
    inputs: tuple = ()
    returns: tuple = ()

    def __post_init__(self):
        if not self.directive:
            raise SchemaError("directive must be non-empty")
        names = [b.name for b in self.inputs]
        if len(set(names)) != len(names):
            raise SchemaError("input names must be pairwise distinct")
        rnames = [r.name for r in self.returns]
        if len(set(rnames)) != len(rnames):
            raise SchemaError("return names must be pairwise distinct")

    def return_names(self) -> tuple:
        return tuple(r.name for r in self.returns)


# ---------------------------------------------------------------------------
# Upward message: CoderResult
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostics:
    root_cause: str
    failed_operation: str = ""
    recoverable_hint: bool | None = None


@dataclass(frozen=True)
class CoderResult:
    """Status, artifact references, summary, diagnostics. Never raw traces.

    artifacts maps output name to an opaque reference string; values never
    ride on this message.
    """

    subtask_id: str
    status: str
    artifacts: tuple = ()
    summary: str = ""
    diagnostics: Diagnostics | None = None

    def __post_init__(self):
        if self.status not in (SUCCESS, FAIL):
            raise SchemaError(f"unknown status {self.status!r}")
        object.__setattr__(
            self, "artifacts", tuple(sorted(self.artifacts, key=lambda a: a[0]))
        )
        names = [n for n, _ in self.artifacts]
        if len(set(names)) != len(names):
            raise SchemaError("artifact names must be distinct")
        if self.status == SUCCESS and self.diagnostics is not None:
            raise SchemaError("a success result carries no diagnostics")
        if self.status == FAIL:
            if self.artifacts:
                raise SchemaError("a fail result carries no artifacts")
            if self.diagnostics is None:
                raise SchemaError("a fail result requires diagnostics")

    def artifact_map(self) -> dict:
        return dict(self.artifacts)


# ---------------------------------------------------------------------------
# Planner decision and replan edits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubTaskSeed:
    title: str
    directive_seed: str
    id: str | None = None


@dataclass(frozen=True)
class ReplanEdit:
    """Replace one subtask with 1..m new pending subtasks. Splits, rewrites,
    and inserted dependencies are all expressible as replace-with-list."""

    target_id: str
    replacements: tuple
    note: str = ""

    def __post_init__(self):
        if not self.replacements:
            raise SchemaError("a replan edit must introduce at least one subtask")


@dataclass(frozen=True)
class Decision:
    verdict: str
    rationale: str = ""
    refined_directive: str | None = None
    edit: ReplanEdit | None = None

    def __post_init__(self):
        if self.verdict not in (PROCEED, RETRY, REPLAN):
            raise SchemaError(f"unknown verdict {self.verdict!r}")
        if self.verdict == RETRY and not self.refined_directive:
            raise SchemaError("a retry decision requires a refined directive")
        if self.verdict == REPLAN and self.edit is None:
            raise SchemaError("a replan decision requires an edit")


# ---------------------------------------------------------------------------
# Validation reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    path: str
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple = ()

    @classmethod
    def from_issues(cls, issues) -> "ValidationReport":
        issues = tuple(issues)
        return cls(ok=not issues, issues=issues)


def validate_specification(
    spec: Specification, visible: Mapping[str, TypeAnnotation]
) -> ValidationReport:
    """Check that every input binding resolves against the visible artifact
    store and that the stored annotation is compatible with the declared one."""
    issues = []
    for i, binding in enumerate(spec.inputs):
        path = f"inputs[{i}]({binding.name})"
        stored = visible.get(binding.artifact_name)
        if stored is None:
            issues.append(
                Issue(path, "unresolved-binding",
                      f"no artifact named {binding.artifact_name!r}")
            )
            continue
        if not _compatible(binding.annotation, stored):
            issues.append(
                Issue(path, "annotation-mismatch",
                      f"declared {binding.annotation.kind}, stored {stored.kind}")
            )
    return ValidationReport.from_issues(issues)


def _compatible(declared: TypeAnnotation, stored: TypeAnnotation) -> bool:
    if declared.kind == "any" or stored.kind == "any":
        return True
    if declared.kind != stored.kind:
        return False
    if declared.kind == "table" and declared.shape and stored.shape:
        return tuple(declared.shape) == tuple(stored.shape)
    return True


def validate_result(
    result: CoderResult,
    returns,
    resolve: Callable[[str], Value],
    predicates: Mapping[str, Callable] | None = None,
) -> ValidationReport:
    """Schema-validate a success result: every return field present, each
    resolved value conformant, every condition holding.

    Fail results are never schema-validated; passing one is a caller bug.
    """
    if result.status != SUCCESS:
        raise SchemaError("only success results are schema-validated")
    issues = []
    refs = result.artifact_map()
    for f in returns:
        path = f"returns({f.name})"
        if f.name not in refs:
            issues.append(Issue(path, "missing-output", f"no artifact for {f.name!r}"))
            continue
        try:
            value = resolve(refs[f.name])
        except Exception as exc:
            issues.append(Issue(path, "unresolvable-reference", str(exc)))
            continue
        why = conformance_error(value, f.annotation)
        if why is not None:
            issues.append(Issue(path, "type-mismatch", why))
            continue
        for cond in f.conditions:
            why = condition_error(cond, value, f.annotation, predicates)
            if why is not None:
                code = "unknown-predicate" if why.startswith("unknown predicate") else "condition-failed"
                issues.append(Issue(path, code, why))
    return ValidationReport.from_issues(issues)
