"""Whitelisted scalar expressions over grid coordinates.

Accepted: numbers, ``pi``, coordinates ``x1..xn`` (``x``, ``y``, ``z``, ``w`` alias
the first four), ``+ - * /``, integer powers and ``sin``/``cos`` of a
subexpression. Nothing is passed to ``eval``.
"""

from __future__ import annotations

import ast

import numpy as np

from .lattice import Grid

ALIASES = {"x": 1, "y": 2, "z": 3, "w": 4}
FUNCS = {"sin": np.sin, "cos": np.cos}
MAX_POWER = 8


class ExpressionError(ValueError):
    pass


def _var_index(name: str, dim: int) -> int:
    if name in ALIASES:
        k = ALIASES[name]
    elif name.startswith("x") and name[1:].isdigit():
        k = int(name[1:])
    else:
        raise ExpressionError(f"unknown name {name!r}")
    if not 1 <= k <= dim:
        raise ExpressionError(f"coordinate {name!r} out of range for dimension {dim}")
    return k - 1


def _check(node: ast.AST, dim: int) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, dim)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric constants are allowed")
    elif isinstance(node, ast.Name):
        if node.id != "pi":
            _var_index(node.id, dim)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("unsupported unary operator")
        _check(node.operand, dim)
    elif isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            e = node.right
            if isinstance(e, ast.UnaryOp) and isinstance(e.op, ast.USub):
                raise ExpressionError("negative powers are not allowed")
            if not (isinstance(e, ast.Constant) and isinstance(e.value, int)
                    and not isinstance(e.value, bool) and 0 <= e.value <= MAX_POWER):
                raise ExpressionError(f"powers must be integer literals in [0, {MAX_POWER}]")
        elif not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            raise ExpressionError("unsupported binary operator")
        _check(node.left, dim)
        _check(node.right, dim)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in FUNCS):
            raise ExpressionError("only sin and cos calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("sin/cos take exactly one argument")
        _check(node.args[0], dim)
    else:
        raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def parse(text: str, dim: int) -> ast.Expression:
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree, dim)
    return tree


def _eval(node, coords):
    if isinstance(node, ast.Expression):
        return _eval(node.body, coords)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return np.pi if node.id == "pi" else coords[_var_index(node.id, len(coords))]
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, coords)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a = _eval(node.left, coords)
        if isinstance(node.op, ast.Pow):
            return a ** node.right.value
        b = _eval(node.right, coords)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        return a / b
    return FUNCS[node.func.id](_eval(node.args[0], coords))


def evaluate(text: str, grid: Grid) -> np.ndarray:
    """Evaluate a whitelisted expression at every grid node."""
    tree = parse(text, grid.dim)
    with np.errstate(divide="raise", invalid="raise"):
        try:
            out = _eval(tree, grid.coords())
        except FloatingPointError as exc:
            raise ExpressionError(f"{text!r} is not finite on the grid") from exc
    return np.broadcast_to(np.asarray(out, dtype=float), grid.shape).copy()
