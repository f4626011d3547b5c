"""CellScript: the deterministic mini-language of the builtin executor.

Three statements (`let name = expr`, `print expr`, `fail "text"`), literals,
arithmetic, comparison, list/record/table constructors, and a fixed builtin
set for table cleaning. Scalars print the way the host language prints them,
so a cell and its host-language twin produce identical stdout. Division by
zero and undefined names are ordinary runtime errors, never crashes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .values import (
    NULL,
    VBool,
    VFloat,
    VInt,
    VList,
    VNull,
    VRecord,
    VTable,
    VText,
    Value,
    to_py,
)

__all__ = ["CellScriptError", "run_cell"]


class CellScriptError(Exception):
    """kind is one of: parse, runtime, user_fail."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        self.message = message
        super().__init__(f"{kind}: {message}")


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<float>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|[+\-*/(){}\[\],:<>=])
  | (?P<ws>[ \t]+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"let", "print", "fail", "true", "false", "null"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str


def _lex(line: str) -> list:
    toks = []
    for match in _TOKEN_RE.finditer(line):
        kind = match.lastgroup
        text = match.group()
        if kind == "ws":
            continue
        if kind == "bad":
            raise CellScriptError("parse", f"unexpected character {text!r}")
        if kind == "name" and text in _KEYWORDS:
            kind = text
        toks.append(_Tok(kind, text))
    return toks


# ---------------------------------------------------------------------------
# Parser (recursive descent over one statement per line)
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: list):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, kind=None, text=None) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise CellScriptError("parse", "unexpected end of statement")
        if kind is not None and tok.kind != kind:
            raise CellScriptError("parse", f"expected {kind}, got {tok.text!r}")
        if text is not None and tok.text != text:
            raise CellScriptError("parse", f"expected {text!r}, got {tok.text!r}")
        self.pos += 1
        return tok

    def at_end(self) -> bool:
        return self.pos >= len(self.toks)

    # statements -------------------------------------------------------------

    def statement(self):
        tok = self.peek()
        if tok.kind == "let":
            self.take("let")
            name = self.take("name").text
            self.take("op", "=")
            expr = self.expression()
            self._finish()
            return ("let", name, expr)
        if tok.kind == "print":
            self.take("print")
            expr = self.expression()
            self._finish()
            return ("print", expr)
        if tok.kind == "fail":
            self.take("fail")
            text = self.take("string").text
            self._finish()
            return ("fail", _unquote(text))
        raise CellScriptError("parse", f"expected a statement, got {tok.text!r}")

    def _finish(self):
        if not self.at_end():
            raise CellScriptError(
                "parse", f"trailing input after statement: {self.peek().text!r}"
            )

    # expressions ------------------------------------------------------------

    def expression(self):
        return self.comparison()

    def comparison(self):
        left = self.additive()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.take().text
            right = self.additive()
            return ("cmp", op, left, right)
        return left

    def additive(self):
        node = self.multiplicative()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in ("+", "-"):
                op = self.take().text
                node = ("bin", op, node, self.multiplicative())
            else:
                return node

    def multiplicative(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in ("*", "/"):
                op = self.take().text
                node = ("bin", op, node, self.unary())
            else:
                return node

    def unary(self):
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "-":
            self.take()
            return ("neg", self.unary())
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok is None:
            raise CellScriptError("parse", "unexpected end of expression")
        if tok.kind == "int":
            self.take()
            return ("lit", VInt(int(tok.text)))
        if tok.kind == "float":
            self.take()
            return ("lit", VFloat(float(tok.text)))
        if tok.kind == "string":
            self.take()
            return ("lit", VText(_unquote(tok.text)))
        if tok.kind == "true":
            self.take()
            return ("lit", VBool(True))
        if tok.kind == "false":
            self.take()
            return ("lit", VBool(False))
        if tok.kind == "null":
            self.take()
            return ("lit", NULL)
        if tok.kind == "name":
            self.take()
            nxt = self.peek()
            if nxt is not None and nxt.kind == "op" and nxt.text == "(":
                return self.call(tok.text)
            return ("name", tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            inner = self.expression()
            self.take("op", ")")
            return inner
        if tok.kind == "op" and tok.text == "[":
            return self.list_literal()
        if tok.kind == "op" and tok.text == "{":
            return self.record_literal()
        raise CellScriptError("parse", f"unexpected token {tok.text!r}")

    def call(self, fname: str):
        self.take("op", "(")
        args = []
        if not (self.peek() and self.peek().text == ")"):
            args.append(self.expression())
            while self.peek() is not None and self.peek().text == ",":
                self.take()
                args.append(self.expression())
        self.take("op", ")")
        return ("call", fname, args)

    def list_literal(self):
        self.take("op", "[")
        items = []
        if not (self.peek() and self.peek().text == "]"):
            items.append(self.expression())
            while self.peek() is not None and self.peek().text == ",":
                self.take()
                items.append(self.expression())
        self.take("op", "]")
        return ("list", items)

    def record_literal(self):
        self.take("op", "{")
        fields = []
        if not (self.peek() and self.peek().text == "}"):
            fields.append(self._record_field())
            while self.peek() is not None and self.peek().text == ",":
                self.take()
                fields.append(self._record_field())
        self.take("op", "}")
        return ("record", fields)

    def _record_field(self):
        tok = self.peek()
        if tok.kind == "string":
            name = _unquote(self.take().text)
        else:
            name = self.take("name").text
        self.take("op", ":")
        return (name, self.expression())


def _unquote(text: str) -> str:
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


def _num(value: Value, op: str) -> int | float:
    if isinstance(value, VInt):
        return value.n
    if isinstance(value, VFloat):
        return value.x
    raise CellScriptError("runtime", f"unsupported operand for {op}: {_kind(value)}")


def _kind(value: Value) -> str:
    from .values import kind_of

    return kind_of(value)


def _wrap_num(x) -> Value:
    return VInt(x) if isinstance(x, int) else VFloat(x)


def _eval(node, env: dict) -> Value:
    tag = node[0]
    if tag == "lit":
        return node[1]
    if tag == "name":
        name = node[1]
        if name not in env:
            raise CellScriptError("runtime", f"name '{name}' is not defined")
        return env[name]
    if tag == "neg":
        return _wrap_num(-_num(_eval(node[1], env), "-"))
    if tag == "bin":
        op, ln, rn = node[1], node[2], node[3]
        left, right = _eval(ln, env), _eval(rn, env)
        if op == "+" and isinstance(left, VText) and isinstance(right, VText):
            return VText(left.s + right.s)
        a, b = _num(left, op), _num(right, op)
        if op == "+":
            return _wrap_num(a + b)
        if op == "-":
            return _wrap_num(a - b)
        if op == "*":
            return _wrap_num(a * b)
        if op == "/":
            if b == 0:
                raise CellScriptError("runtime", "division by zero")
            return VFloat(a / b)
        raise CellScriptError("runtime", f"unknown operator {op!r}")
    if tag == "cmp":
        op, ln, rn = node[1], node[2], node[3]
        left, right = _eval(ln, env), _eval(rn, env)
        if op in ("==", "!="):
            eq = to_py(left) == to_py(right)
            return VBool(eq if op == "==" else not eq)
        if isinstance(left, VText) and isinstance(right, VText):
            a, b = left.s, right.s
        else:
            a, b = _num(left, op), _num(right, op)
        result = {
            "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
        }[op]
        return VBool(result)
    if tag == "list":
        return VList(tuple(_eval(e, env) for e in node[1]))
    if tag == "record":
        return VRecord(tuple((n, _eval(e, env)) for n, e in node[1]))
    if tag == "call":
        return _call(node[1], [_eval(a, env) for a in node[2]], env)
    raise CellScriptError("runtime", f"bad AST node {tag!r}")


def _expect_table(args, i, fname) -> VTable:
    if i >= len(args) or not isinstance(args[i], VTable):
        raise CellScriptError("runtime", f"{fname}() expects a table argument")
    return args[i]


def _expect_text(args, i, fname) -> str:
    if i >= len(args) or not isinstance(args[i], VText):
        raise CellScriptError("runtime", f"{fname}() expects a column name")
    return args[i].s


def _column(table: VTable, name: str, fname: str) -> int:
    if name not in table.columns:
        raise CellScriptError("runtime", f"{fname}(): no column {name!r}")
    return table.columns.index(name)


def _call(fname: str, args: list, env: dict) -> Value:
    if fname == "len":
        if len(args) != 1:
            raise CellScriptError("runtime", "len() takes one argument")
        x = args[0]
        if isinstance(x, VList):
            return VInt(len(x.items))
        if isinstance(x, VText):
            return VInt(len(x.s))
        if isinstance(x, VRecord):
            return VInt(len(x.fields))
        if isinstance(x, VTable):
            return VInt(len(x.rows))
        raise CellScriptError("runtime", f"len() unsupported for {_kind(x)}")
    if fname == "rows":
        return VInt(len(_expect_table(args, 0, fname).rows))
    if fname == "cols":
        return VInt(len(_expect_table(args, 0, fname).columns))
    if fname == "table":
        if len(args) != 2 or not isinstance(args[0], VList) or not isinstance(args[1], VList):
            raise CellScriptError("runtime", "table() takes (columns, rows)")
        columns = []
        for c in args[0].items:
            if not isinstance(c, VText):
                raise CellScriptError("runtime", "table() column names must be text")
            columns.append(c.s)
        rows = []
        for r in args[1].items:
            if not isinstance(r, VList):
                raise CellScriptError("runtime", "table() rows must be lists")
            rows.append(tuple(r.items))
        try:
            return VTable(tuple(columns), tuple(rows))
        except Exception as exc:
            raise CellScriptError("runtime", str(exc)) from None
    if fname == "dedupe_by":
        t = _expect_table(args, 0, fname)
        col = _column(t, _expect_text(args, 1, fname), fname)
        # Keeps the first row per key; null keys are never considered equal
        # to each other, so null-keyed rows all survive.
        seen = set()
        kept = []
        for row in t.rows:
            key = row[col]
            if isinstance(key, VNull):
                kept.append(row)
                continue
            kver = (_kind(key), to_py(key) if not isinstance(key, (VList, VRecord, VTable)) else str(to_py(key)))
            if kver in seen:
                continue
            seen.add(kver)
            kept.append(row)
        return VTable(t.columns, tuple(kept))
    if fname == "drop_null_rows":
        t = _expect_table(args, 0, fname)
        col = _column(t, _expect_text(args, 1, fname), fname)
        kept = tuple(row for row in t.rows if not isinstance(row[col], VNull))
        return VTable(t.columns, kept)
    if fname == "fill_forward":
        t = _expect_table(args, 0, fname)
        col = _column(t, _expect_text(args, 1, fname), fname)
        last = None
        rows = []
        for row in t.rows:
            cell = row[col]
            if isinstance(cell, VNull):
                if last is not None:
                    row = row[:col] + (last,) + row[col + 1:]
            else:
                last = cell
            rows.append(row)
        return VTable(t.columns, tuple(rows))
    if fname == "scale_column":
        t = _expect_table(args, 0, fname)
        col = _column(t, _expect_text(args, 1, fname), fname)
        if len(args) != 3:
            raise CellScriptError("runtime", "scale_column() takes (table, column, factor)")
        factor = _num(args[2], "scale_column")
        rows = []
        for row in t.rows:
            cell = row[col]
            if isinstance(cell, VNull):
                rows.append(row)
                continue
            scaled = _wrap_num(_num(cell, "scale_column") * factor)
            rows.append(row[:col] + (scaled,) + row[col + 1:])
        return VTable(t.columns, tuple(rows))
    raise CellScriptError("runtime", f"unknown function {fname!r}")


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def run_cell(namespace: dict, code: str):
    """Execute one cell in ``namespace``.

    Returns (stdout, error, defined_names) where error is None or a
    (kind, message) pair. Statements before a failing one keep their effects,
    mirroring host-interpreter semantics, and partial stdout is preserved.
    """
    stdout_parts = []
    defined = []
    error = None
    for raw_line in code.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        try:
            stmt = _Parser(_lex(line)).statement()
        except CellScriptError as exc:
            error = (exc.kind, exc.message)
            break
        try:
            if stmt[0] == "let":
                value = _eval(stmt[2], namespace)
                namespace[stmt[1]] = value
                if stmt[1] not in defined:
                    defined.append(stmt[1])
            elif stmt[0] == "print":
                value = _eval(stmt[1], namespace)
                stdout_parts.append(_print_text(value))
            elif stmt[0] == "fail":
                raise CellScriptError("user_fail", stmt[1])
        except CellScriptError as exc:
            error = (exc.kind, exc.message)
            break
    return "".join(stdout_parts), error, defined


def _print_text(value: Value) -> str:
    return str(to_py(value)) + "\n"
