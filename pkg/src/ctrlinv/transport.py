"""Parallel sections, parallel transport along leaves, and the frame-change matrix.

The closed-form parallel sections are obtained by freezing the leaf
coordinates of each projected control at zero; transport of coefficient
matrices along leaf directions solves the linear ODE driven by the
connection coefficients.  Because the connection is flat, staircase
transports are path independent, and composing them from the zero slice to
a point reproduces the frame-change matrix that least squares assembles
directly at that point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .geometry import AffineSystem, QuotientSection, VectorFieldExpr, quotient_project
from .grids import GridSpec
from .invariance import ConnectionCoeffs, _batched_lstsq, _symbolic_coefficients

__all__ = [
    "TransportResult",
    "AMatrixField",
    "IllConditionedError",
    "build_zbar",
    "parallel_transport",
    "transport_staircase",
    "assemble_A",
]


def build_zbar(system: AffineSystem) -> list[QuotientSection]:
    """Closed-form parallel sections: quotient components with leaf coordinates zeroed.

    The result is annihilated by every leaf derivative exactly: after the
    substitution no leaf variable remains, so symbolic differentiation folds
    to zero.
    """
    chart = system.chart
    zero_leaf = {i: ex.ZERO for i in range(1, chart.k + 1)}
    out = []
    for g in system.controls:
        if not isinstance(g, VectorFieldExpr):
            raise TypeError("parallel sections need symbolic control fields")
        quot = quotient_project(g, chart)
        out.append(QuotientSection(tuple(ex.substitute(c, zero_leaf) for c in quot.components)))
    return out


@dataclass
class TransportResult:
    """Transported coefficient matrices along an axis-aligned path.

    ``points[i]``/``sigmas[i]`` are the i-th path corner and the coefficient
    matrix there; ``sigmas[0]`` is the prescribed initial value, exactly.
    """

    points: list[np.ndarray]
    sigmas: list[np.ndarray]
    axes: list[int]
    step: float

    @property
    def sigma_end(self) -> np.ndarray:
        return self.sigmas[-1]


def _transport_segment(
    sigma: np.ndarray,
    axis: int,
    start: np.ndarray,
    end: np.ndarray,
    gamma: ConnectionCoeffs,
    h: float,
) -> np.ndarray:
    """Classical fixed-step 4th-order integration of sigma' = Gamma(c(t)) sigma."""
    length = float(end[axis - 1] - start[axis - 1])
    if length == 0.0:
        return sigma.copy()
    steps = max(1, int(round(abs(length) / h)))
    dt = length / steps

    def rate(t: float, sig: np.ndarray) -> np.ndarray:
        point = start.copy()
        point[axis - 1] += t
        return gamma.matrix_at(point, axis) @ sig

    t = 0.0
    sig = sigma.copy()
    for _ in range(steps):
        k1 = rate(t, sig)
        k2 = rate(t + dt / 2.0, sig + dt / 2.0 * k1)
        k3 = rate(t + dt / 2.0, sig + dt / 2.0 * k2)
        k4 = rate(t + dt, sig + dt * k3)
        sig = sig + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return sig


def parallel_transport(
    init: np.ndarray,
    axis: int,
    start,
    end,
    gamma: ConnectionCoeffs,
    h: float,
) -> TransportResult:
    """Transport the coefficient matrix ``init`` along one axis-aligned segment."""
    if h <= 0:
        raise ValueError(f"integration step must be positive, got {h}")
    chart = gamma.grid.chart
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if not 1 <= axis <= chart.k:
        raise ValueError(f"transport axis {axis} must be a leaf axis <= k={chart.k}")
    off_axis = [d for d in range(chart.n) if d != axis - 1]
    if np.any(start[off_axis] != end[off_axis]):
        raise ValueError("start and end may differ only in the transport axis")
    for label, point in (("start", start), ("end", end)):
        if not chart.contains_point(point):
            raise ValueError(f"transport {label} point {tuple(point)} leaves the box")
    init = np.array(init, dtype=float)
    sigma = _transport_segment(init, axis, start, end, gamma, h)
    return TransportResult(points=[start, end], sigmas=[init, sigma], axes=[axis], step=h)


def transport_staircase(
    init: np.ndarray,
    target,
    gamma: ConnectionCoeffs,
    h: float | None = None,
    axis_order=None,
) -> TransportResult:
    """Transport from the zero-slice point below ``target`` up the axis staircase.

    Fills leaf coordinates one axis at a time (ascending by default), which
    mirrors the closed-form construction; flatness makes the order
    irrelevant up to integration error.
    """
    chart = gamma.grid.chart
    target = np.asarray(target, dtype=float)
    order = list(axis_order) if axis_order is not None else list(range(1, chart.k + 1))
    if sorted(order) != list(range(1, chart.k + 1)):
        raise ValueError(f"axis order {order} must be a permutation of 1..{chart.k}")
    current = target.copy()
    current[: chart.k] = 0.0
    sigma = np.array(init, dtype=float)
    points = [current.copy()]
    sigmas = [sigma.copy()]
    axes = []
    step_used = h
    for axis in order:
        nxt = current.copy()
        nxt[axis - 1] = target[axis - 1]
        seg_len = abs(float(nxt[axis - 1] - current[axis - 1]))
        seg_h = h if h is not None else (seg_len / 100.0 if seg_len > 0 else 1.0)
        step_used = seg_h if step_used is None else step_used
        sigma = _transport_segment(sigma, axis, current, nxt, gamma, seg_h)
        current = nxt
        points.append(current.copy())
        sigmas.append(sigma.copy())
        axes.append(axis)
    return TransportResult(points=points, sigmas=sigmas, axes=axes, step=float(step_used or 0.0))


class IllConditionedError(RuntimeError):
    """Frame-change matrix is too ill-conditioned to invert somewhere.

    Carries the assembled field and, when one exists, the largest safe
    sub-box found around the base point (a greedy axis-expansion estimate).
    """

    def __init__(self, message: str, field: "AMatrixField", advisory_box):
        super().__init__(message)
        self.field = field
        self.advisory_box = advisory_box


@dataclass
class AMatrixField:
    """Frame-change matrix per node, row-major over the controls:
    projected control i = sum_j values[i, j] * frame section j.

    This is the same layout a staircase transport of the identity produces,
    and its pointwise inverse is the feedback gain in the convention
    new control i = sum_j gain[i, j] * control j."""

    grid: GridSpec
    values: np.ndarray  # (N, m, m)
    condition: np.ndarray  # (N,)
    residuals: np.ndarray  # (N,)
    base_matrix: np.ndarray  # (m, m) at the chart base point
    base_identity_error: float
    exprs: list | None = None  # exprs[i][j] entry expressions

    @property
    def m(self) -> int:
        return self.values.shape[1]


def _stacked_condition(mats: np.ndarray) -> np.ndarray:
    if mats.shape[-1] == 0:
        return np.zeros(mats.shape[0])
    s = np.linalg.svd(mats, compute_uv=False)
    smin = s[:, -1]
    with np.errstate(divide="ignore"):
        cond = np.where(smin > 0.0, s[:, 0] / np.where(smin > 0.0, smin, 1.0), np.inf)
    return cond


def _greedy_safe_block(grid: GridSpec, safe: np.ndarray, anchor: tuple[int, ...]):
    """Grow an axis-aligned index block of safe nodes around the anchor.

    The seed block is the hull of the anchor and the zero nodes of the leaf
    axes, so any advisory box keeps the zero slice (the staircase integrals
    start there).  Returns None when even the seed block is unsafe.
    """
    safe_nd = safe.reshape(grid.shape)
    k = grid.chart.k
    lo = list(anchor)
    hi = list(anchor)
    for axis in range(1, k + 1):
        zero = grid.zero_index(axis)
        lo[axis - 1] = min(lo[axis - 1], zero)
        hi[axis - 1] = max(hi[axis - 1], zero)
    seed = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
    if not np.all(safe_nd[seed]):
        return None

    def block_ok(lo_idx, hi_idx) -> bool:
        sl = tuple(slice(a, b + 1) for a, b in zip(lo_idx, hi_idx))
        return bool(np.all(safe_nd[sl]))

    grown = True
    while grown:
        grown = False
        for d in range(len(grid.shape)):
            if lo[d] > 0:
                trial = list(lo)
                trial[d] -= 1
                if block_ok(trial, hi):
                    lo = trial
                    grown = True
            if hi[d] < grid.shape[d] - 1:
                trial = list(hi)
                trial[d] += 1
                if block_ok(lo, trial):
                    hi = trial
                    grown = True
    return tuple(
        (grid.axes[d][lo[d]], grid.axes[d][hi[d]]) for d in range(len(grid.shape))
    )


def assemble_A(
    system: AffineSystem,
    zbar: list[QuotientSection],
    grid: GridSpec,
    cond_limit: float = 1e8,
) -> AMatrixField:
    """Solve (projected controls) = (parallel frame) @ A at every node.

    Records the condition number of A per node.  On the zero slice the frame
    equals the projected controls, so A is the identity there; the value at
    the chart base point is solved directly and its deviation from the
    identity recorded.  If the condition number exceeds ``cond_limit``
    anywhere, raises IllConditionedError carrying a domain-shrink advisory.
    """
    chart = system.chart
    m = system.m
    points = grid.nodes()
    frame = (
        np.stack([z.values_on(points) for z in zbar], axis=2)
        if m
        else np.zeros((len(points), chart.n - chart.k, 0))
    )
    targets = (
        np.stack([quotient_project(g, chart).values_on(points) for g in system.controls], axis=2)
        if m
        else np.zeros((len(points), chart.n - chart.k, 0))
    )
    solved, residuals = _batched_lstsq(frame, targets)
    values = np.transpose(solved, (0, 2, 1))  # row i expands projected control i
    condition = _stacked_condition(values)

    base = np.asarray(chart.base_point, dtype=float)[None, :]
    frame_base = (
        np.stack([z.values_on(base) for z in zbar], axis=2)
        if m
        else np.zeros((1, chart.n - chart.k, 0))
    )
    targets_base = (
        np.stack([quotient_project(g, chart).values_on(base) for g in system.controls], axis=2)
        if m
        else np.zeros((1, chart.n - chart.k, 0))
    )
    base_matrix = _batched_lstsq(frame_base, targets_base)[0][0].T
    base_err = float(np.max(np.abs(base_matrix - np.eye(m)))) if m else 0.0

    exprs = None
    if m > 0 and system.is_symbolic():
        columns = [list(quotient_project(g, chart).components) for g in system.controls]
        closed = _symbolic_coefficients(
            [list(z.components) for z in zbar],
            columns,
            points,
            values,
        )
        if closed is not None:
            exprs = closed  # closed[i][j]: frame coefficient j of projected control i

    field = AMatrixField(
        grid=grid,
        values=values,
        condition=condition,
        residuals=residuals,
        base_matrix=base_matrix,
        base_identity_error=base_err,
        exprs=exprs,
    )
    worst = float(np.max(condition)) if condition.size else 0.0
    if worst > cond_limit:
        anchor = grid.nearest_node_multi_index(chart.base_point)
        advisory = _greedy_safe_block(grid, condition <= cond_limit, anchor)
        raise IllConditionedError(
            f"frame-change matrix condition number {worst:.3g} exceeds {cond_limit:.3g}; "
            f"largest safe sub-box around the base point: {advisory}",
            field,
            advisory,
        )
    return field
