"""Tiny arithmetic grammar for coefficient expressions in JSON specs.

Accepted: numeric literals, the variable ``x``, the constants ``pi`` and
``e``, the operators ``+ - * / **``, unary minus and ``exp(...)``.
Anything else is rejected before evaluation.
"""

import ast
import math

import numpy as np

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}


class ExpressionError(ValueError):
    pass


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda x: np.full_like(x, value, dtype=float)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x: x
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda x: np.full_like(x, value, dtype=float)
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left), _compile(node.right)
        return lambda x: op(left(x), right(x))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda x: sign * inner(x)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id == "exp" and len(node.args) == 1 and not node.keywords:
        inner = _compile(node.args[0])
        return lambda x: np.exp(inner(x))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_expression(text: str):
    """Compile ``text`` into a vectorized callable of ``x``."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    fn = _compile(tree)

    def evaluate(x):
        return fn(np.asarray(x, dtype=float))

    evaluate.source = str(text)
    return evaluate
