"""Typed value model crossing the agent boundary.

Every object exchanged between the planning side and an execution session is
one of these immutable tagged values: Null, Bool, Int, Float, Text, List,
Record, or Table. Tables are first-class so tabular artifacts keep their
type, shape, and content instead of being flattened to text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

__all__ = [
    "Value",
    "VNull",
    "VBool",
    "VInt",
    "VFloat",
    "VText",
    "VList",
    "VRecord",
    "VTable",
    "NULL",
    "TypeAnnotation",
    "ValueModelError",
    "annotate",
    "conformance_error",
    "conforms",
    "from_py",
    "to_py",
    "is_identifier",
    "kind_of",
    "preview",
    "render_annotation",
    "render_value",
    "values_equal",
    "FLOAT_TOLERANCE",
]

# Absolute tolerance for float comparison inside validation conditions.
FLOAT_TOLERANCE = 1e-9

KINDS = ("null", "bool", "int", "float", "text", "list", "record", "table", "any")

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ValueModelError(ValueError):
    """Raised when a value or annotation violates a structural invariant."""


def is_identifier(name: str) -> bool:
    return bool(_IDENT_RE.match(name))


@dataclass(frozen=True)
class VNull:
    pass


@dataclass(frozen=True)
class VBool:
    flag: bool


@dataclass(frozen=True)
class VInt:
    n: int


@dataclass(frozen=True)
class VFloat:
    x: float

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise ValueModelError("floats must be finite")


@dataclass(frozen=True)
class VText:
    s: str


@dataclass(frozen=True)
class VList:
    items: tuple = ()


@dataclass(frozen=True)
class VRecord:
    # Stored sorted by field name: records are mappings, order-insensitive.
    fields: tuple = ()

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueModelError("record field names must be unique")
        object.__setattr__(self, "fields", tuple(sorted(self.fields, key=lambda f: f[0])))

    def get(self, name):
        for n, v in self.fields:
            if n == name:
                return v
        return None


@dataclass(frozen=True)
class VTable:
    columns: tuple = ()
    rows: tuple = ()

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueModelError("table column names must be unique")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueModelError(
                    f"table row {i} has {len(row)} cells, expected {width}"
                )

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ValueModelError(f"table has no column {name!r}") from None

    @property
    def shape(self) -> tuple:
        return (len(self.rows), len(self.columns))


Value = Union[VNull, VBool, VInt, VFloat, VText, VList, VRecord, VTable]

NULL = VNull()

_KIND_BY_TYPE = {
    VNull: "null",
    VBool: "bool",
    VInt: "int",
    VFloat: "float",
    VText: "text",
    VList: "list",
    VRecord: "record",
    VTable: "table",
}


def kind_of(value: Value) -> str:
    try:
        return _KIND_BY_TYPE[type(value)]
    except KeyError:
        raise ValueModelError(f"not a value: {value!r}") from None


def from_py(obj) -> Value:
    """Build a Value from plain Python data (dicts become records)."""
    if obj is None:
        return NULL
    if isinstance(obj, bool):
        return VBool(obj)
    if isinstance(obj, int):
        return VInt(obj)
    if isinstance(obj, float):
        return VFloat(obj)
    if isinstance(obj, str):
        return VText(obj)
    if isinstance(obj, (list, tuple)):
        return VList(tuple(from_py(x) for x in obj))
    if isinstance(obj, dict):
        return VRecord(tuple((str(k), from_py(v)) for k, v in obj.items()))
    if isinstance(obj, (VNull, VBool, VInt, VFloat, VText, VList, VRecord, VTable)):
        return obj
    raise ValueModelError(f"cannot convert {type(obj).__name__} to a value")


def to_py(value: Value):
    if isinstance(value, VNull):
        return None
    if isinstance(value, VBool):
        return value.flag
    if isinstance(value, VInt):
        return value.n
    if isinstance(value, VFloat):
        return value.x
    if isinstance(value, VText):
        return value.s
    if isinstance(value, VList):
        return [to_py(v) for v in value.items]
    if isinstance(value, VRecord):
        return {n: to_py(v) for n, v in value.fields}
    if isinstance(value, VTable):
        return {
            "columns": list(value.columns),
            "rows": [[to_py(c) for c in row] for row in value.rows],
        }
    raise ValueModelError(f"not a value: {value!r}")


def values_equal(a: Value, b: Value, tol: float = FLOAT_TOLERANCE) -> bool:
    """Structural equality with absolute tolerance on floats."""
    if isinstance(a, VFloat) and isinstance(b, VFloat):
        return abs(a.x - b.x) <= tol
    if type(a) is not type(b):
        return False
    if isinstance(a, VList):
        return len(a.items) == len(b.items) and all(
            values_equal(x, y, tol) for x, y in zip(a.items, b.items)
        )
    if isinstance(a, VRecord):
        return len(a.fields) == len(b.fields) and all(
            na == nb and values_equal(va, vb, tol)
            for (na, va), (nb, vb) in zip(a.fields, b.fields)
        )
    if isinstance(a, VTable):
        return a.columns == b.columns and len(a.rows) == len(b.rows) and all(
            values_equal(x, y, tol)
            for ra, rb in zip(a.rows, b.rows)
            for x, y in zip(ra, rb)
        )
    return a == b


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeAnnotation:
    """Kind plus optional table shape and per-column rules.

    ``column_rules`` maps column name to a rule set; the only rule understood
    today is "no_nulls".
    """

    kind: str
    shape: tuple | None = None
    column_rules: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueModelError(f"unknown annotation kind {self.kind!r}")
        if self.shape is not None and self.kind != "table":
            raise ValueModelError("shape is only meaningful for table annotations")
        if self.shape is not None:
            rows, cols = self.shape
            if rows < 0 or cols < 0:
                raise ValueModelError("shape must be non-negative")
        for name, rules in self.column_rules:
            for rule in rules:
                if rule != "no_nulls":
                    raise ValueModelError(f"unknown column rule {rule!r}")


def annotate(value: Value) -> TypeAnnotation:
    """Infer the annotation of a concrete value (tables get their shape)."""
    kind = kind_of(value)
    if kind == "table":
        return TypeAnnotation("table", shape=value.shape)
    return TypeAnnotation(kind)


def conformance_error(value: Value, annotation: TypeAnnotation) -> str:
    """Explain why ``value`` does not conform, or return None if it does."""
    if annotation.kind == "any":
        return None
    kind = kind_of(value)
    if kind != annotation.kind:
        return f"expected {annotation.kind}, got {kind}"
    if annotation.kind == "table":
        if annotation.shape is not None and value.shape != tuple(annotation.shape):
            want = "x".join(str(d) for d in annotation.shape)
            got = "x".join(str(d) for d in value.shape)
            return f"expected shape {want}, got {got}"
        for name, rules in annotation.column_rules:
            if name not in value.columns:
                return f"missing column {name!r}"
            if "no_nulls" in rules:
                col = value.column_index(name)
                for i, row in enumerate(value.rows):
                    if isinstance(row[col], VNull):
                        return f"null in column {name!r} at row {i}"
    return None


def conforms(value: Value, annotation: TypeAnnotation) -> bool:
    return conformance_error(value, annotation) is None


def render_annotation(annotation: TypeAnnotation) -> str:
    if annotation.kind == "table" and annotation.shape is not None:
        rows, cols = annotation.shape
        return f"table {rows}×{cols}"
    return annotation.kind


# ---------------------------------------------------------------------------
# Rendering and previews
# ---------------------------------------------------------------------------

PREVIEW_MAX_ROWS = 5
PREVIEW_MAX_CHARS = 200


def render_value(value: Value) -> str:
    """Full plain-text rendering (Python-style scalars, compact containers)."""
    if isinstance(value, VTable):
        header = ",".join(value.columns)
        body = "\n".join(
            ",".join(_scalar_text(c) for c in row) for row in value.rows
        )
        return f"[{header}]\n{body}" if body else f"[{header}]"
    return _scalar_text(value)


def _scalar_text(value: Value) -> str:
    if isinstance(value, (VList, VRecord, VTable)):
        return str(to_py(value))
    return str(to_py(value))


def preview(value: Value, max_rows: int = PREVIEW_MAX_ROWS,
            max_chars: int = PREVIEW_MAX_CHARS) -> Value:
    """Truncated sample of a value: at most ``max_rows`` table rows, and text
    clipped to ``max_chars`` characters."""
    if isinstance(value, VTable):
        return VTable(value.columns, value.rows[:max_rows])
    if isinstance(value, VText) and len(value.s) > max_chars:
        return VText(value.s[:max_chars])
    if isinstance(value, VList):
        return VList(value.items[:max_rows])
    return value


def render_preview(value: Value, max_chars: int = PREVIEW_MAX_CHARS) -> str:
    """One-line preview string used in planning context and input bindings."""
    text = render_value(preview(value)).replace("\n", " | ")
    if len(text) > max_chars:
        text = text[:max_chars]
    return text
