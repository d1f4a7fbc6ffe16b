"""A tiny expression language for coefficient fields.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER ["i"] | "i" | "pi" | FUNC "(" expr ")"
            | VAR "[" INT "]" | "(" expr ")"

Variables are 1-indexed: ``lambda[1..q]``, ``x[1..n]``, ``xi[1..n]`` and,
in boundary rows, ``theta[1..]`` (boundary chart angles).  Evaluation is
vectorized over numpy arrays and pure.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = ["Expr", "ExprError", "ExprRuntimeError", "ExprSyntaxError", "compile_expr", "evaluate"]

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
CONSTS = {"pi": math.pi}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, text: str, pos: int):
        self.message = message
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at column {pos + 1} in {text!r}")


class ExprRuntimeError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: complex


@dataclass(frozen=True)
class Var:
    name: str
    index: int  # 0-based
    pos: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    pos: int


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"
    pos: int


Node = Union[Num, Var, Call, Unary, Binary]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z_0-9]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()\[\]]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("num") is not None:
            start = m.start("num")
            out.append(("num", m.group("num") + (m.group("imag") or ""), start))
        elif m.group("name") is not None:
            out.append(("name", m.group("name"), start))
        else:
            out.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, dims: Mapping[str, int]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.dims = dims

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            got = "end of expression" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {value!r}, got {got}", self.text, tok[2])
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", self.text, tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            tok = self.take()
            node = Binary(tok[1], node, self.term(), tok[2])
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            tok = self.take()
            node = Binary(tok[1], node, self.unary(), tok[2])
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            return Unary(tok[1], self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            return Binary("^", base, self.unary(), tok[2])
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            if val.endswith("i"):
                return Num(complex(0.0, float(val[:-1])))
            return Num(complex(float(val)))
        if kind == "name":
            if val == "i":
                return Num(1j)
            if val in CONSTS:
                return Num(complex(CONSTS[val]))
            if val in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg, pos)
            if val in self.dims:
                self.expect("[")
                kind2, idx, ipos = self.take()
                if kind2 != "num" or not idx.isdigit():
                    raise ExprSyntaxError(f"index of {val} must be a positive integer", self.text, ipos)
                k = int(idx)
                if not 1 <= k <= self.dims[val]:
                    raise ExprSyntaxError(f"{val}[{k}] is out of range 1..{self.dims[val]}", self.text, ipos)
                self.expect("]")
                return Var(val, k - 1, pos)
            raise ExprSyntaxError(f"unknown name {val!r}", self.text, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of expression" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {got}", self.text, pos)


@dataclass(frozen=True)
class Expr:
    text: str
    ast: Node

    @property
    def variables(self) -> frozenset[str]:
        out = set()

        def walk(n):
            if isinstance(n, Var):
                out.add(n.name)
            elif isinstance(n, Call):
                walk(n.arg)
            elif isinstance(n, Unary):
                walk(n.arg)
            elif isinstance(n, Binary):
                walk(n.left)
                walk(n.right)

        walk(self.ast)
        return frozenset(out)

    def __call__(self, env: Mapping[str, np.ndarray], size: int | None = None) -> np.ndarray:
        return evaluate(self, env, size)


def compile_expr(text, dims: Mapping[str, int]) -> Expr:
    """Parse ``text`` (a string or a plain number) against variable dimensions ``dims``."""
    if isinstance(text, bool):
        raise ExprSyntaxError("booleans are not expressions", str(text), 0)
    if isinstance(text, (int, float, complex)):
        return Expr(repr(text), Num(complex(text)))
    if not isinstance(text, str):
        raise ExprSyntaxError(f"expected a string or number, got {type(text).__name__}", str(text), 0)
    if not text.strip():
        raise ExprSyntaxError("empty expression", text, 0)
    return Expr(text, _Parser(text, dims).parse())


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name][..., node.index]
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        if node.func == "sqrt":
            return np.sqrt(np.asarray(arg, dtype=complex))
        return FUNCS[node.func](arg)
    if isinstance(node, Unary):
        a = _eval(node.arg, env)
        # 0 - a keeps +0 imaginary parts, so sqrt(-4) stays on the principal branch
        return 0 - a if node.op == "-" else a
    a, b = _eval(node.left, env), _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    if isinstance(b, complex) and b.imag == 0 and float(b.real).is_integer():
        return a ** int(b.real)
    return np.asarray(a, dtype=complex) ** b


def evaluate(expr: Expr, env: Mapping[str, np.ndarray], size: int | None = None) -> np.ndarray:
    """Evaluate on batched variables; raises ``ExprRuntimeError`` at the first non-finite sample."""
    with np.errstate(all="ignore"):
        val = _eval(expr.ast, env)
    if size is None:
        size = len(next(iter(env.values()))) if env else 1
    out = np.broadcast_to(np.asarray(val, dtype=complex), (size,)).copy()
    bad = ~np.isfinite(out)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        where = {k: np.asarray(v)[i].tolist() for k, v in env.items()}
        raise ExprRuntimeError(f"expression {expr.text!r} is not finite at sample {i}: {where}")
    return out
