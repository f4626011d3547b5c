"""Schema validation: specification grounding and result checking."""

import pytest

from delegator.messages import (
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
    SchemaError,
    ShapeEquals,
    Specification,
    SubTaskSeed,
    TypeMatches,
    condition_error,
    validate_result,
    validate_specification,
)
from delegator.values import NULL, TypeAnnotation, VInt, VTable, VText, annotate


def _table(rows, cols, null_at=()):
    body = tuple(
        tuple(NULL if (r, c) in null_at else VInt(r * cols + c) for c in range(cols))
        for r in range(rows)
    )
    return VTable(tuple(f"c{i}" for i in range(cols)), body)


# -- specification validation -------------------------------------------------


def test_binding_resolves_against_store():
    t = _table(847, 12)
    spec = Specification(
        subtask_id="s2", directive="clean",
        inputs=(InputBinding("df_raw", "df_raw", annotate(t)),),
        returns=(),
    )
    report = validate_specification(spec, {"df_raw": annotate(t)})
    assert report.ok


def test_spec_with_zero_inputs_is_valid():
    spec = Specification(
        subtask_id="s", directive="make something",
        returns=(ReturnField("out", TypeAnnotation("int")),),
    )
    assert validate_specification(spec, {}).ok


def test_unresolved_binding_reported_by_name():
    spec = Specification(
        subtask_id="s", directive="go",
        inputs=(InputBinding("x", "x", TypeAnnotation("int")),),
    )
    report = validate_specification(spec, {})
    assert not report.ok
    assert report.issues[0].code == "unresolved-binding"
    assert "x" in report.issues[0].message


def test_annotation_mismatch_reported():
    spec = Specification(
        subtask_id="s", directive="go",
        inputs=(InputBinding("x", "x", TypeAnnotation("int")),),
    )
    report = validate_specification(spec, {"x": TypeAnnotation("text")})
    assert not report.ok
    assert report.issues[0].code == "annotation-mismatch"


def test_spec_invariants_enforced_at_construction():
    with pytest.raises(SchemaError):
        Specification(subtask_id="s", directive="")
    b = InputBinding("x", "a", TypeAnnotation("int"))
    with pytest.raises(SchemaError):
        Specification(subtask_id="s", directive="go", inputs=(b, b))
    with pytest.raises(SchemaError):
        InputBinding("not an ident!", "a", TypeAnnotation("int"))


def test_sample_kind_must_match_annotation():
    with pytest.raises(SchemaError):
        InputBinding("x", "a", TypeAnnotation("int"), sample=VText("nope"))


# -- result validation ---------------------------------------------------------


def _success(names):
    return CoderResult(
        subtask_id="s", status="success",
        artifacts=tuple((n, f"ref:{n}") for n in names), summary="ok",
    )


def test_clean_table_with_no_null_conditions_is_valid():
    t = _table(821, 12)
    returns = (ReturnField("df_clean", TypeAnnotation("table"), (
        NoNullsInColumn("c0"), NoNullsInColumn("c4"),
    )),)
    report = validate_result(_success(["df_clean"]), returns, {"ref:df_clean": t}.__getitem__)
    assert report.ok


def test_vacuous_schema_is_valid():
    assert validate_result(_success([]), (), lambda r: None).ok


def test_missing_output_named():
    returns = (ReturnField("df_clean", TypeAnnotation("table")),)
    report = validate_result(_success(["df"]), returns, lambda r: _table(1, 1))
    assert not report.ok
    assert report.issues[0].code == "missing-output"
    assert "df_clean" in report.issues[0].message


def test_null_in_checked_column_fails():
    t = _table(5, 2, null_at={(3, 0)})
    returns = (ReturnField("t", TypeAnnotation("table"), (NoNullsInColumn("c0"),)),)
    report = validate_result(_success(["t"]), returns, {"ref:t": t}.__getitem__)
    assert not report.ok


def test_unknown_named_predicate_is_an_error_not_true():
    returns = (ReturnField("x", TypeAnnotation("int"), (Named("is_prime"),)),)
    report = validate_result(_success(["x"]), returns, {"ref:x": VInt(7)}.__getitem__)
    assert not report.ok
    assert report.issues[0].code == "unknown-predicate"
    assert "is_prime" in report.issues[0].message


def test_registered_predicate_runs():
    returns = (ReturnField("x", TypeAnnotation("int"), (Named("positive"),)),)
    registry = {"positive": lambda v: v.n > 0}
    ok = validate_result(_success(["x"]), returns, {"ref:x": VInt(7)}.__getitem__, registry)
    bad = validate_result(_success(["x"]), returns, {"ref:x": VInt(-7)}.__getitem__, registry)
    assert ok.ok and not bad.ok


def test_fail_results_never_schema_validated():
    fail = CoderResult(
        subtask_id="s", status="fail", summary="",
        diagnostics=Diagnostics(root_cause="x"),
    )
    with pytest.raises(SchemaError):
        validate_result(fail, (), lambda r: None)


def test_condition_vocabulary():
    t = _table(4, 2)
    ann = annotate(t)
    assert condition_error(TypeMatches(), t, ann) is None
    assert condition_error(NonEmpty(), t, ann) is None
    assert condition_error(NonEmpty(), _table(0, 1), annotate(_table(0, 1))) is not None
    assert condition_error(ShapeEquals(4, 2), t, ann) is None
    assert condition_error(ShapeEquals(5, 2), t, ann) is not None
    assert condition_error(RowsAtMost(4), t, ann) is None
    assert condition_error(RowsAtMost(3), t, ann) is not None
    assert condition_error(RowsAtLeast(5), t, ann) is not None
    assert condition_error(NonEmpty(), VInt(3), TypeAnnotation("int")) is not None


def test_result_status_field_coupling():
    with pytest.raises(SchemaError):
        CoderResult(subtask_id="s", status="success", summary="",
                    diagnostics=Diagnostics(root_cause="x"))
    with pytest.raises(SchemaError):
        CoderResult(subtask_id="s", status="fail", summary="",
                    artifacts=(("a", "r"),), diagnostics=Diagnostics(root_cause="x"))
    with pytest.raises(SchemaError):
        CoderResult(subtask_id="s", status="fail", summary="")


def test_decision_invariants():
    with pytest.raises(SchemaError):
        Decision(verdict="retry")
    with pytest.raises(SchemaError):
        Decision(verdict="replan")
    with pytest.raises(SchemaError):
        ReplanEdit(target_id="s1", replacements=())
    Decision(verdict="replan",
             edit=ReplanEdit("s1", (SubTaskSeed("t", "d"),)))
