import pytest

from delegator.values import (
    NULL,
    TypeAnnotation,
    ValueModelError,
    VFloat,
    VInt,
    VList,
    VRecord,
    VTable,
    VText,
    annotate,
    conformance_error,
    conforms,
    from_py,
    kind_of,
    preview,
    render_annotation,
    render_preview,
    to_py,
    values_equal,
)


def test_from_py_to_py_roundtrip():
    data = {"a": 1, "b": [1.5, None, "x"], "c": True}
    assert to_py(from_py(data)) == data


def test_table_row_width_enforced():
    with pytest.raises(ValueModelError):
        VTable(("a", "b"), ((VInt(1),),))


def test_table_column_names_unique():
    with pytest.raises(ValueModelError):
        VTable(("a", "a"), ())


def test_record_field_names_unique_and_sorted():
    r = VRecord((("b", VInt(2)), ("a", VInt(1))))
    assert [n for n, _ in r.fields] == ["a", "b"]
    with pytest.raises(ValueModelError):
        VRecord((("a", VInt(1)), ("a", VInt(2))))


def test_floats_must_be_finite():
    with pytest.raises(ValueModelError):
        VFloat(float("inf"))


def test_annotation_shape_only_for_tables():
    with pytest.raises(ValueModelError):
        TypeAnnotation("int", shape=(1, 1))


def test_annotate_infers_table_shape():
    t = VTable(("x", "y"), ((VInt(1), VInt(2)), (VInt(3), VInt(4))))
    ann = annotate(t)
    assert ann.kind == "table" and ann.shape == (2, 2)
    assert render_annotation(ann) == "table 2×2"


def test_conformance_kind_and_shape():
    t = VTable(("x",), ((VInt(1),),))
    assert conforms(t, TypeAnnotation("table", shape=(1, 1)))
    assert not conforms(t, TypeAnnotation("table", shape=(2, 1)))
    assert conforms(t, TypeAnnotation("any"))
    assert conformance_error(VInt(1), TypeAnnotation("text")) == "expected text, got int"


def test_conformance_no_nulls_rule():
    ann = TypeAnnotation("table", column_rules=(("x", frozenset({"no_nulls"})),))
    good = VTable(("x",), ((VInt(1),),))
    bad = VTable(("x",), ((NULL,),))
    assert conforms(good, ann)
    assert "null in column" in conformance_error(bad, ann)


def test_values_equal_float_tolerance():
    assert values_equal(VFloat(1.0), VFloat(1.0 + 5e-10))
    assert not values_equal(VFloat(1.0), VFloat(1.0 + 5e-8))
    assert not values_equal(VInt(1), VFloat(1.0))


def test_preview_truncates_tables_to_five_rows():
    t = VTable(("x",), tuple((VInt(i),) for i in range(50)))
    p = preview(t)
    assert p.shape == (5, 1)


def test_preview_truncates_text_to_200_chars():
    p = preview(VText("a" * 999))
    assert len(p.s) == 200


def test_render_preview_caps_line_length():
    t = VTable(("long_column",), tuple((VText("v" * 40),) for i in range(5)))
    assert len(render_preview(t)) <= 200


def test_kind_of_rejects_non_values():
    with pytest.raises(ValueModelError):
        kind_of("raw string")


def test_lists_convert_to_tuples():
    v = from_py([1, 2])
    assert isinstance(v, VList) and isinstance(v.items, tuple)
