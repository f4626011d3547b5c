"""Canonical JSON wire encoding.

One byte-stable encoding for every message: UTF-8 JSON with sorted keys, no
insignificant whitespace, no NaN/Infinity. encode(decode(encode(m))) is the
same bytes, and decode enforces every type invariant, reporting failures with
a field path.
"""

from __future__ import annotations

import json

from . import messages as m
from . import values as v

__all__ = [
    "DecodeError",
    "canonical_dumps",
    "encode_message",
    "decode_message",
    "value_to_obj",
    "value_from_obj",
    "annotation_to_obj",
    "annotation_from_obj",
    "condition_to_obj",
    "condition_from_obj",
    "return_field_to_obj",
    "return_field_from_obj",
    "diagnostics_to_obj",
    "diagnostics_from_obj",
    "edit_to_obj",
    "edit_from_obj",
]


class DecodeError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


def canonical_dumps(obj) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


def value_to_obj(value):
    if isinstance(value, v.VNull):
        return {"kind": "null"}
    if isinstance(value, v.VBool):
        return {"kind": "bool", "value": value.flag}
    if isinstance(value, v.VInt):
        return {"kind": "int", "value": value.n}
    if isinstance(value, v.VFloat):
        return {"kind": "float", "value": value.x}
    if isinstance(value, v.VText):
        return {"kind": "text", "value": value.s}
    if isinstance(value, v.VList):
        return {"kind": "list", "items": [value_to_obj(x) for x in value.items]}
    if isinstance(value, v.VRecord):
        return {"kind": "record", "fields": {n: value_to_obj(x) for n, x in value.fields}}
    if isinstance(value, v.VTable):
        return {
            "kind": "table",
            "columns": list(value.columns),
            "rows": [[value_to_obj(c) for c in row] for row in value.rows],
        }
    raise v.ValueModelError(f"not a value: {value!r}")


def value_from_obj(obj, path: str = "$"):
    kind = _req(obj, "kind", str, path)
    if kind == "null":
        return v.NULL
    if kind == "bool":
        return v.VBool(_req(obj, "value", bool, path))
    if kind == "int":
        return v.VInt(_req(obj, "value", int, path))
    if kind == "float":
        x = obj.get("value")
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise DecodeError(f"{path}.value", "expected float")
        return v.VFloat(float(x))
    if kind == "text":
        return v.VText(_req(obj, "value", str, path))
    if kind == "list":
        items = _req(obj, "items", list, path)
        return v.VList(
            tuple(value_from_obj(x, f"{path}.items[{i}]") for i, x in enumerate(items))
        )
    if kind == "record":
        fields = _req(obj, "fields", dict, path)
        return _wrap(path, lambda: v.VRecord(
            tuple((n, value_from_obj(x, f"{path}.fields.{n}")) for n, x in fields.items())
        ))
    if kind == "table":
        columns = _req(obj, "columns", list, path)
        rows = _req(obj, "rows", list, path)
        parsed = tuple(
            tuple(value_from_obj(c, f"{path}.rows[{i}][{j}]") for j, c in enumerate(row))
            for i, row in enumerate(rows)
        )
        return _wrap(path, lambda: v.VTable(tuple(columns), parsed))
    raise DecodeError(f"{path}.kind", f"unknown value kind {kind!r}")


def annotation_to_obj(ann: v.TypeAnnotation):
    obj = {"kind": ann.kind}
    if ann.shape is not None:
        obj["shape"] = [ann.shape[0], ann.shape[1]]
    if ann.column_rules:
        obj["columns"] = {name: sorted(rules) for name, rules in ann.column_rules}
    return obj


def annotation_from_obj(obj, path: str = "$"):
    kind = _req(obj, "kind", str, path)
    shape = None
    if "shape" in obj:
        raw = _req(obj, "shape", list, path)
        if len(raw) != 2 or not all(isinstance(d, int) for d in raw):
            raise DecodeError(f"{path}.shape", "expected [rows, cols]")
        shape = (raw[0], raw[1])
    rules = ()
    if "columns" in obj:
        cols = _req(obj, "columns", dict, path)
        rules = tuple(sorted((n, frozenset(r)) for n, r in cols.items()))
    return _wrap(path, lambda: v.TypeAnnotation(kind, shape=shape, column_rules=rules))


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------

_COND_TAGS = {
    m.TypeMatches: "type_matches",
    m.NonEmpty: "non_empty",
    m.ShapeEquals: "shape_equals",
    m.RowsAtMost: "rows_at_most",
    m.RowsAtLeast: "rows_at_least",
    m.NoNullsInColumn: "no_nulls_in_column",
    m.Named: "named",
}


def condition_to_obj(cond):
    tag = _COND_TAGS.get(type(cond))
    if tag is None:
        raise m.SchemaError(f"unknown condition {cond!r}")
    obj = {"check": tag}
    if isinstance(cond, m.ShapeEquals):
        obj.update(rows=cond.rows, cols=cond.cols)
    elif isinstance(cond, (m.RowsAtMost, m.RowsAtLeast)):
        obj["n"] = cond.n
    elif isinstance(cond, m.NoNullsInColumn):
        obj["column"] = cond.column
    elif isinstance(cond, m.Named):
        obj["predicate_id"] = cond.predicate_id
    return obj


def condition_from_obj(obj, path: str = "$"):
    tag = _req(obj, "check", str, path)
    if tag == "type_matches":
        return m.TypeMatches()
    if tag == "non_empty":
        return m.NonEmpty()
    if tag == "shape_equals":
        return m.ShapeEquals(_req(obj, "rows", int, path), _req(obj, "cols", int, path))
    if tag == "rows_at_most":
        return m.RowsAtMost(_req(obj, "n", int, path))
    if tag == "rows_at_least":
        return m.RowsAtLeast(_req(obj, "n", int, path))
    if tag == "no_nulls_in_column":
        return m.NoNullsInColumn(_req(obj, "column", str, path))
    if tag == "named":
        return m.Named(_req(obj, "predicate_id", str, path))
    raise DecodeError(f"{path}.check", f"unknown condition {tag!r}")


# ---------------------------------------------------------------------------
# Message bodies
# ---------------------------------------------------------------------------


def _binding_to_obj(b: m.InputBinding):
    obj = {
        "name": b.name,
        "artifact": b.artifact_name,
        "annotation": annotation_to_obj(b.annotation),
    }
    if b.sample is not None:
        obj["sample"] = value_to_obj(b.sample)
    return obj


def _binding_from_obj(obj, path):
    sample = None
    if "sample" in obj:
        sample = value_from_obj(_req(obj, "sample", dict, path), f"{path}.sample")
    return _wrap(path, lambda: m.InputBinding(
        name=_req(obj, "name", str, path),
        artifact_name=_req(obj, "artifact", str, path),
        annotation=annotation_from_obj(_req(obj, "annotation", dict, path), f"{path}.annotation"),
        sample=sample,
    ))


def return_field_to_obj(f: m.ReturnField):
    obj = {"name": f.name, "annotation": annotation_to_obj(f.annotation)}
    if f.conditions:
        obj["conditions"] = [condition_to_obj(c) for c in f.conditions]
    return obj


def return_field_from_obj(obj, path: str = "$"):
    conds = ()
    if "conditions" in obj:
        raw = _req(obj, "conditions", list, path)
        conds = tuple(
            condition_from_obj(c, f"{path}.conditions[{i}]") for i, c in enumerate(raw)
        )
    return _wrap(path, lambda: m.ReturnField(
        name=_req(obj, "name", str, path),
        annotation=annotation_from_obj(_req(obj, "annotation", dict, path), f"{path}.annotation"),
        conditions=conds,
    ))


def diagnostics_to_obj(d: m.Diagnostics):
    obj = {"root_cause": d.root_cause, "failed_operation": d.failed_operation}
    if d.recoverable_hint is not None:
        obj["recoverable_hint"] = d.recoverable_hint
    return obj


def diagnostics_from_obj(obj, path: str = "$"):
    hint = obj.get("recoverable_hint")
    if hint is not None and not isinstance(hint, bool):
        raise DecodeError(f"{path}.recoverable_hint", "expected bool")
    return m.Diagnostics(
        root_cause=_req(obj, "root_cause", str, path),
        failed_operation=obj.get("failed_operation", ""),
        recoverable_hint=hint,
    )


def _seed_to_obj(s: m.SubTaskSeed):
    obj = {"title": s.title, "directive_seed": s.directive_seed}
    if s.id is not None:
        obj["id"] = s.id
    return obj


def _seed_from_obj(obj, path):
    sid = obj.get("id")
    if sid is not None and not isinstance(sid, str):
        raise DecodeError(f"{path}.id", "expected string")
    return m.SubTaskSeed(
        title=_req(obj, "title", str, path),
        directive_seed=_req(obj, "directive_seed", str, path),
        id=sid,
    )


def edit_to_obj(e: m.ReplanEdit):
    obj = {
        "target": e.target_id,
        "replacements": [_seed_to_obj(s) for s in e.replacements],
    }
    if e.note:
        obj["note"] = e.note
    return obj


def edit_from_obj(obj, path: str = "$"):
    raw = _req(obj, "replacements", list, path)
    seeds = tuple(
        _seed_from_obj(s, f"{path}.replacements[{i}]") for i, s in enumerate(raw)
    )
    return _wrap(path, lambda: m.ReplanEdit(
        target_id=_req(obj, "target", str, path),
        replacements=seeds,
        note=obj.get("note", ""),
    ))


# ---------------------------------------------------------------------------
# Top-level messages
# ---------------------------------------------------------------------------


def encode_message(msg) -> bytes:
    if isinstance(msg, m.Specification):
        obj = {
            "type": "specification",
            "subtask_id": msg.subtask_id,
            "directive": msg.directive,
            "inputs": [_binding_to_obj(b) for b in msg.inputs],
            "returns": [return_field_to_obj(f) for f in msg.returns],
        }
    elif isinstance(msg, m.CoderResult):
        obj = {
            "type": "coder_result",
            "subtask_id": msg.subtask_id,
            "status": msg.status,
            "artifacts": {n: ref for n, ref in msg.artifacts},
            "summary": msg.summary,
        }
        if msg.diagnostics is not None:
            obj["diagnostics"] = diagnostics_to_obj(msg.diagnostics)
    elif isinstance(msg, m.Decision):
        obj = {
            "type": "decision",
            "verdict": msg.verdict,
            "rationale": msg.rationale,
        }
        if msg.refined_directive is not None:
            obj["refined_directive"] = msg.refined_directive
        if msg.edit is not None:
            obj["edit"] = edit_to_obj(msg.edit)
    else:
        raise m.SchemaError(f"not an encodable message: {type(msg).__name__}")
    return canonical_dumps(obj).encode("utf-8")


def decode_message(data):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError("$", f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("$", "expected a JSON object")
    mtype = _req(obj, "type", str, "$")
    if mtype == "specification":
        inputs = tuple(
            _binding_from_obj(b, f"$.inputs[{i}]")
            for i, b in enumerate(_req(obj, "inputs", list, "$"))
        )
        returns = tuple(
            return_field_from_obj(f, f"$.returns[{i}]")
            for i, f in enumerate(_req(obj, "returns", list, "$"))
        )
        return _wrap("$", lambda: m.Specification(
            subtask_id=_req(obj, "subtask_id", str, "$"),
            directive=_req(obj, "directive", str, "$"),
            inputs=inputs,
            returns=returns,
        ))
    if mtype == "coder_result":
        artifacts = _req(obj, "artifacts", dict, "$")
        for name, ref in artifacts.items():
            if not isinstance(ref, str):
                raise DecodeError(f"$.artifacts.{name}", "expected string reference")
        diagnostics = None
        if "diagnostics" in obj:
            diagnostics = diagnostics_from_obj(
                _req(obj, "diagnostics", dict, "$"), "$.diagnostics"
            )
        return _wrap("$", lambda: m.CoderResult(
            subtask_id=_req(obj, "subtask_id", str, "$"),
            status=_req(obj, "status", str, "$"),
            artifacts=tuple(artifacts.items()),
            summary=_req(obj, "summary", str, "$"),
            diagnostics=diagnostics,
        ))
    if mtype == "decision":
        edit = None
        if "edit" in obj:
            edit = edit_from_obj(_req(obj, "edit", dict, "$"), "$.edit")
        refined = obj.get("refined_directive")
        if refined is not None and not isinstance(refined, str):
            raise DecodeError("$.refined_directive", "expected string")
        return _wrap("$", lambda: m.Decision(
            verdict=_req(obj, "verdict", str, "$"),
            rationale=_req(obj, "rationale", str, "$"),
            refined_directive=refined,
            edit=edit,
        ))
    raise DecodeError("$.type", f"unknown message type {mtype!r}")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _req(obj, key, typ, path):
    if not isinstance(obj, dict) or key not in obj:
        raise DecodeError(f"{path}.{key}", "missing field")
    val = obj[key]
    if typ is int and isinstance(val, bool):
        raise DecodeError(f"{path}.{key}", "expected int, got bool")
    if not isinstance(val, typ):
        raise DecodeError(f"{path}.{key}", f"expected {typ.__name__}")
    return val


def _wrap(path, build):
    """Construct a message type, converting invariant violations into
    path-carrying decode errors."""
    try:
        return build()
    except (m.SchemaError, v.ValueModelError) as exc:
        raise DecodeError(path, str(exc)) from None
