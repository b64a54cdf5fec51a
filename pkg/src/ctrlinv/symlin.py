"""Cramer-style linear solves over symbolic expression matrices.

Used to pull closed-form connection and feedback coefficients out of small
(m <= 3 or so) pointwise-independent frames.  Solutions are rational
expressions; callers must validate them numerically against the grid values
before trusting them, since independence can only be checked pointwise.
"""

from __future__ import annotations

from . import expr as ex
from .expr import ScalarExpr

__all__ = ["det_expr", "solve_square_expr", "solve_normal_expr"]

Matrix = list[list[ScalarExpr]]


def det_expr(m: Matrix) -> ScalarExpr:
    """Determinant by cofactor expansion along the first row."""
    size = len(m)
    if any(len(row) != size for row in m):
        raise ValueError("matrix must be square")
    if size == 0:
        return ex.ONE
    if size == 1:
        return m[0][0]
    out: ScalarExpr = ex.ZERO
    for col in range(size):
        minor = [[row[c] for c in range(size) if c != col] for row in m[1:]]
        term = ex.mul(m[0][col], det_expr(minor))
        out = ex.add(out, term) if col % 2 == 0 else ex.sub(out, term)
    return out


def solve_square_expr(m: Matrix, rhs: list[ScalarExpr]) -> list[ScalarExpr]:
    """Solve m x = rhs by Cramer's rule; entries are rational in the inputs."""
    size = len(m)
    if len(rhs) != size:
        raise ValueError(f"rhs length {len(rhs)} does not match matrix size {size}")
    d = det_expr(m)
    out = []
    for col in range(size):
        replaced = [[rhs[r] if c == col else m[r][c] for c in range(size)] for r in range(size)]
        out.append(ex.div(det_expr(replaced), d))
    return out


def solve_normal_expr(m: Matrix, rhs: list[ScalarExpr]) -> list[ScalarExpr]:
    """Least-squares solve of the (rows x cols) system via normal equations.

    Valid where the columns are pointwise independent; there it agrees with
    the minimum-norm numerical solution.
    """
    rows = len(m)
    if len(rhs) != rows:
        raise ValueError(f"rhs length {len(rhs)} does not match row count {rows}")
    cols = len(m[0]) if rows else 0
    normal = [
        [_dot([m[r][a] for r in range(rows)], [m[r][b] for r in range(rows)]) for b in range(cols)]
        for a in range(cols)
    ]
    proj = [_dot([m[r][a] for r in range(rows)], rhs) for a in range(cols)]
    return solve_square_expr(normal, proj)


def _dot(a: list[ScalarExpr], b: list[ScalarExpr]) -> ScalarExpr:
    out: ScalarExpr = ex.ZERO
    for x, y in zip(a, b):
        out = ex.add(out, ex.mul(x, y))
    return out
