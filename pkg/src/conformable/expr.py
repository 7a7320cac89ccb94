"""Tiny arithmetic-expression language for scenario files.

Expressions use Python syntax restricted to numbers, the operators
``+ - * / ** ^`` (``^`` is a power with the precedence of ``**``), parentheses, the functions
``sin cos exp pow`` and the constants ``pi e``.  Free variables must be
declared; by default only ``t`` is allowed.

>>> f = compile_expression("exp(-t) * cos(2*pi*t)")
>>> round(f(t=0.5), 12)
-0.606530659713
"""

from __future__ import annotations

import ast
import math
import operator
from typing import Callable, Iterable

__all__ = ["ExpressionError", "compile_expression", "FUNCTIONS", "CONSTANTS"]

FUNCTIONS: dict[str, Callable] = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
                                  "pow": math.pow}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    """The expression text is not in the accepted language."""


def _check(node: ast.AST, names: frozenset) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown identifier {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINARY:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only sin, cos, exp and pow may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        want = 2 if node.func.id == "pow" else 1
        if len(node.args) != want:
            raise ExpressionError(f"{node.func.id} takes {want} argument(s)")
        for a in node.args:
            _check(a, names)
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _build(node: ast.AST) -> Callable[[dict], float]:
    if isinstance(node, ast.Constant):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda env: v
        key = node.id
        return lambda env: env[key]
    if isinstance(node, ast.BinOp):
        op, lhs, rhs = _BINARY[type(node.op)], _build(node.left), _build(node.right)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.UnaryOp):
        op, arg = _UNARY[type(node.op)], _build(node.operand)
        return lambda env: op(arg(env))
    fn = FUNCTIONS[node.func.id]
    args = [_build(a) for a in node.args]
    if len(args) == 1:
        a0 = args[0]
        return lambda env: fn(a0(env))
    a0, a1 = args
    return lambda env: fn(a0(env), a1(env))


def compile_expression(text: str, variables: Iterable[str] = ("t",)) -> Callable[..., float]:
    """Parse ``text`` once and return ``f(**values) -> float``.

    Raises
    ------
    ExpressionError
        On a syntax error or anything outside the accepted language.
    """
    if not isinstance(text, str):
        raise ExpressionError(f"expected an expression string, got {type(text).__name__}")
    names = frozenset(variables)
    try:
        # no string literals are accepted, so a textual rewrite is safe
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree, names)
    body = _build(tree.body)

    def evaluate(**values) -> float:
        missing = names.difference(values)
        if missing:
            raise ExpressionError(f"missing value for {sorted(missing)[0]!r}")
        try:
            return float(body(values))
        except (OverflowError, ZeroDivisionError, ValueError, TypeError) as exc:
            raise ArithmeticError(f"evaluating {text!r}: {exc}") from None

    evaluate.source = text
    return evaluate
