"""A small arithmetic grammar for data functions in config files.

Allowed: numbers, ``x1 x2 x3`` (coordinates), ``n1 n2 n3`` (outward normal
components), ``pi``, ``+ - * / **`` with constant integer exponents, and
``sin cos exp``. Expressions are parsed with :mod:`ast` and converted into a
tree that can be evaluated on numpy arrays and differentiated symbolically;
nothing is ever passed to ``eval``.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .manufactured import ScalarFunction


class ExpressionError(ValueError):
    pass


VARIABLES = ("x1", "x2", "x3", "n1", "n2", "n3")
FUNCTIONS = ("sin", "cos", "exp")


@dataclass(frozen=True)
class Node:
    op: str  # "num" | "var" | "+" | "*" | "/" | "pow" | "neg" | "sin" | "cos" | "exp"
    args: tuple = ()
    value: object = None


def num(v: float) -> Node:
    return Node("num", (), float(v))


ZERO, ONE = num(0.0), num(1.0)


def _is_num(a: Node, v=None) -> bool:
    return a.op == "num" and (v is None or a.value == v)


def add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return num(a.value + b.value)
    return Node("+", (a, b))


def mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return num(a.value * b.value)
    return Node("*", (a, b))


def neg(a: Node) -> Node:
    if _is_num(a):
        return num(-a.value)
    return Node("neg", (a,))


def div(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    return Node("/", (a, b))


def power(a: Node, k: float) -> Node:
    if k == 0:
        return ONE
    if k == 1:
        return a
    return Node("pow", (a,), float(k))


_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/", ast.Pow: "**"}


def _convert(node) -> Node:
    if isinstance(node, ast.Expression):
        return _convert(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return num(node.value)
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return num(math.pi)
        if node.id in VARIABLES:
            return Node("var", (), node.id)
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _convert(node.operand)
        return neg(inner) if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a, b = _convert(node.left), _convert(node.right)
        op = _BINOPS[type(node.op)]
        if op == "+":
            return add(a, b)
        if op == "-":
            return add(a, neg(b))
        if op == "*":
            return mul(a, b)
        if op == "/":
            return div(a, b)
        if not _is_num(b):
            raise ExpressionError("exponents must be numeric constants")
        return power(a, b.value)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return Node(node.func.id, (_convert(node.args[0]),))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


@lru_cache(maxsize=None)
def parse(text: str) -> Node:
    if not isinstance(text, str):
        raise ExpressionError(f"expected an expression string, got {type(text).__name__}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree)


def diff(e: Node, var: str) -> Node:
    op = e.op
    if op == "num":
        return ZERO
    if op == "var":
        return ONE if e.value == var else ZERO
    if op == "+":
        return add(diff(e.args[0], var), diff(e.args[1], var))
    if op == "neg":
        return neg(diff(e.args[0], var))
    if op == "*":
        a, b = e.args
        return add(mul(diff(a, var), b), mul(a, diff(b, var)))
    if op == "/":
        a, b = e.args
        return div(add(mul(diff(a, var), b), neg(mul(a, diff(b, var)))), power(b, 2))
    if op == "pow":
        a = e.args[0]
        return mul(mul(num(e.value), power(a, e.value - 1)), diff(a, var))
    a = e.args[0]
    da = diff(a, var)
    if op == "sin":
        return mul(Node("cos", (a,)), da)
    if op == "cos":
        return neg(mul(Node("sin", (a,)), da))
    if op == "exp":
        return mul(e, da)
    raise ExpressionError(f"cannot differentiate {op}")


_NUMPY = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


def evaluate(e: Node, env: dict, npts: int) -> np.ndarray:
    op = e.op
    if op == "num":
        return np.full(npts, e.value)
    if op == "var":
        if e.value not in env:
            raise ExpressionError(f"variable {e.value} not available here")
        return np.broadcast_to(np.asarray(env[e.value], dtype=float), (npts,))
    if op == "+":
        return evaluate(e.args[0], env, npts) + evaluate(e.args[1], env, npts)
    if op == "neg":
        return -evaluate(e.args[0], env, npts)
    if op == "*":
        return evaluate(e.args[0], env, npts) * evaluate(e.args[1], env, npts)
    if op == "/":
        return evaluate(e.args[0], env, npts) / evaluate(e.args[1], env, npts)
    if op == "pow":
        return evaluate(e.args[0], env, npts) ** e.value
    return _NUMPY[op](evaluate(e.args[0], env, npts))


def variables_used(e: Node) -> set:
    if e.op == "var":
        return {e.value}
    out = set()
    for a in e.args:
        out |= variables_used(a)
    return out


def _env(x, n=None) -> dict:
    x = np.asarray(x, dtype=float)
    env = {f"x{k + 1}": x[k] for k in range(x.shape[0])}
    if n is not None:
        env.update({f"n{k + 1}": float(v) for k, v in enumerate(n)})
    return env


class ExpressionFunction(ScalarFunction):
    """A parsed expression of the coordinates with symbolic derivatives."""

    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tree = parse(text)
        bad = {v for v in variables_used(self.tree) if v.startswith("n") or int(v[1]) > dim}
        if bad:
            raise ExpressionError(f"{text!r} uses {sorted(bad)}, not available for a {dim}D field")
        self._cache = {(0,) * dim: self.tree}

    def _tree(self, alpha) -> Node:
        alpha = tuple(alpha)
        if alpha not in self._cache:
            k = next(i for i, a in enumerate(alpha) if a > 0)
            lower = list(alpha)
            lower[k] -= 1
            self._cache[alpha] = diff(self._tree(lower), f"x{k + 1}")
        return self._cache[alpha]

    def derivative(self, x, alpha):
        x = np.asarray(x, dtype=float)
        return np.array(evaluate(self._tree(alpha), _env(x), x.shape[1]), dtype=float)

    def __eq__(self, other):
        return isinstance(other, ExpressionFunction) and (self.text, self.dim) == (other.text, other.dim)

    def __hash__(self):
        return hash((self.text, self.dim))


@dataclass(frozen=True)
class DataExpression:
    """Component expressions of ``(x, n) -> values`` (boundary data or sources)."""

    texts: tuple
    dim: int

    def __post_init__(self):
        for t in self.texts:
            tree = parse(t)
            bad = {v for v in variables_used(tree) if int(v[1]) > self.dim}
            if bad:
                raise ExpressionError(f"{t!r} uses {sorted(bad)} in {self.dim}D")

    def __call__(self, x, n=None):
        x = np.asarray(x, dtype=float)
        env = _env(x, n)
        return np.array([evaluate(parse(t), env, x.shape[1]) for t in self.texts])
