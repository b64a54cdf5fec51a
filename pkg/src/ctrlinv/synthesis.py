"""Construction of the feedback pair and the transformed system.

The gain matrix is the pointwise inverse of the frame-change matrix, which
makes the new controls project onto the parallel frame.  The drift
correction integrates the drift coefficients along the axis staircase from
the zero slice; subtracting the resulting combination of controls leaves a
drift whose projection is parallel.  Closed forms are produced whenever the
coefficient functions are polynomial in the leaf coordinates (with
leaf-free denominators); otherwise everything is delivered as grid values
with multilinear interpolation and verified at evaluation level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from . import expr as ex
from . import symlin
from .expr import ScalarExpr
from .geometry import AffineSystem, ChartSpec, VectorFieldExpr
from .grids import GridSpec, GridVectorField, MultilinearGrid
from .invariance import AlphaCoeffs
from .transport import AMatrixField

__all__ = [
    "DriftCoefficients",
    "FeedbackPair",
    "integrate_drift_coeffs",
    "synthesize_beta",
    "synthesize_alpha",
    "assemble_feedback",
    "apply_feedback",
]


@dataclass
class DriftCoefficients:
    """Values of the staircase integrals of the drift coefficients.

    Named btilde here: these are the coefficients expanding the non-parallel
    part of the projected drift over the parallel frame.  They vanish on the
    zero slice by construction.
    """

    grid: GridSpec
    values: np.ndarray  # (N, m)
    exprs: list[ScalarExpr] | None = None


def _staircase_order(k: int, axis_order) -> list[int]:
    order = list(axis_order) if axis_order is not None else list(range(k, 0, -1))
    if sorted(order) != list(range(1, k + 1)):
        raise ValueError(f"axis order {order} must be a permutation of 1..{k}")
    return order


def integrate_drift_coeffs(
    alpha_coeffs: AlphaCoeffs, chart: ChartSpec, grid: GridSpec, axis_order=None
) -> DriftCoefficients:
    """Composite-Simpson staircase integrals of the drift coefficients.

    Default order integrates coefficient (i, j) along axis i for i = k..1,
    pinning every already-integrated leaf axis at 0; the first term keeps
    all remaining coordinates free.  Any axis permutation gives another
    valid set of coefficients (the leaf derivatives commute).  Uses the
    grid's own nodes (cumulative Simpson along each axis line).
    """
    k = chart.k
    m = alpha_coeffs.values.shape[2]
    order = _staircase_order(k, axis_order)
    for axis in range(1, k + 1):
        if len(grid.axes[axis - 1]) < 3:
            raise ValueError(
                f"grid too coarse for Simpson quadrature: axis {axis} has "
                f"{len(grid.axes[axis - 1])} nodes (need at least 3)"
            )
    shape = grid.shape
    total = np.zeros(shape + (m,))
    alpha_nd = alpha_coeffs.values.reshape(shape + (k, m))
    for idx, i in enumerate(order):
        arr = alpha_nd[..., i - 1, :]  # (shape) + (m,)
        pinned = sorted(order[:idx], reverse=True)
        for axis in pinned:
            arr = np.take(arr, grid.zero_index(axis), axis=axis - 1)
        # after removing larger axes, axis i sits at position i-1 minus the
        # number of removed axes below it
        pos = i - 1 - sum(1 for axis in pinned if axis < i)
        x = grid.axis_array(i)
        cum = cumulative_simpson(arr, x=x, axis=pos, initial=0.0)
        zero_slice = np.take(cum, grid.zero_index(i), axis=pos)
        term = cum - np.expand_dims(zero_slice, axis=pos)
        # broadcast back over the pinned axes
        for axis in sorted(pinned):
            term = np.expand_dims(term, axis=axis - 1)
        total = total + np.broadcast_to(term, shape + (m,))
    return DriftCoefficients(grid=grid, values=total.reshape(grid.num_nodes, m))


def integrate_drift_coeffs_symbolic(alpha_exprs, chart: ChartSpec, axis_order=None) -> list[ScalarExpr]:
    """Exact staircase integrals when every coefficient is polynomial in the
    leaf coordinates; raises NotPolynomialError otherwise."""
    k = chart.k
    order = _staircase_order(k, axis_order)
    m = len(alpha_exprs[0]) if alpha_exprs else 0
    out = []
    for j in range(m):
        acc: ScalarExpr = ex.ZERO
        for idx, i in enumerate(order):
            pinned = ex.substitute(
                alpha_exprs[i - 1][j], {axis: ex.ZERO for axis in order[:idx]}
            )
            acc = ex.add(acc, ex.integrate_from_zero(pinned, i))
        out.append(acc)
    return out


def synthesize_beta(a_field: AMatrixField, cond_limit: float = 1e8):
    """Pointwise inverse of the frame-change matrix (the feedback gain).

    Returns (values (N, m, m), exprs or None).  Raises on a singular matrix
    inside the validity region, which violates the assembly contract.
    """
    cond = a_field.condition
    if np.any(~np.isfinite(cond)) or (cond.size and float(np.max(cond)) > cond_limit):
        raise ValueError(
            "frame-change matrix is singular or ill-conditioned inside the validity box; "
            "assemble it with a domain-shrink advisory first"
        )
    m = a_field.m
    if m == 0:
        return np.zeros((a_field.values.shape[0], 0, 0)), None
    values = np.linalg.inv(a_field.values)
    exprs = None
    if a_field.exprs is not None:
        try:
            cols = [
                symlin.solve_square_expr(a_field.exprs, [ex.ONE if r == j else ex.ZERO for r in range(m)])
                for j in range(m)
            ]
            exprs = [[cols[j][i] for j in range(m)] for i in range(m)]
        except ex.ExprError:
            exprs = None
    return values, exprs


def synthesize_alpha(
    driftcoeffs: DriftCoefficients,
    zbar,
    a_field: AMatrixField,
    grid: GridSpec,
):
    """Feedback offsets: minus the change of basis of the drift coefficients.

    Solving A alpha_hat = btilde rewrites the staircase combination of the
    parallel frame over the projected controls; the returned offset is
    -alpha_hat so the closed-loop drift is drift + sum_j control_j * alpha_j.
    Returns (values (N, m), exprs or None).
    """
    m = a_field.m
    if m == 0:
        return np.zeros((driftcoeffs.values.shape[0], 0)), None
    # sum_j alpha_hat_j (projected control j) = sum_l btilde_l (frame l)
    # with row-major A this reads A^T alpha_hat = btilde
    at = np.transpose(a_field.values, (0, 2, 1))
    alpha_hat = np.linalg.solve(at, driftcoeffs.values[:, :, None])[:, :, 0]
    values = -alpha_hat
    exprs = None
    if a_field.exprs is not None and driftcoeffs.exprs is not None:
        try:
            a_t = [[a_field.exprs[j][i] for j in range(m)] for i in range(m)]
            hat = symlin.solve_square_expr(a_t, list(driftcoeffs.exprs))
            exprs = [ex.neg(e) for e in hat]
        except ex.ExprError:
            exprs = None
    return values, exprs


@dataclass
class FeedbackPair:
    """The synthesized feedback: offsets alpha (m) and gain beta (m x m).

    Values live on the validity grid; closed forms are attached when
    available.  The gain at the base point is the identity whenever the
    frame-change matrix is the identity there.
    """

    grid: GridSpec
    alpha_values: np.ndarray  # (N, m)
    beta_values: np.ndarray  # (N, m, m)
    alpha_exprs: list[ScalarExpr] | None = None
    beta_exprs: list | None = None

    def __post_init__(self):
        m = self.m
        self._alpha_interp = MultilinearGrid(self.grid, self.alpha_values.reshape(self.grid.shape + (m,)))
        self._beta_interp = MultilinearGrid(self.grid, self.beta_values.reshape(self.grid.shape + (m, m)))

    @property
    def m(self) -> int:
        return self.alpha_values.shape[1]

    @property
    def validity_box(self) -> tuple[tuple[float, float], ...]:
        return tuple((axis[0], axis[-1]) for axis in self.grid.axes)

    def is_symbolic(self) -> bool:
        return self.alpha_exprs is not None and self.beta_exprs is not None

    def alpha_at(self, q) -> np.ndarray:
        if self.alpha_exprs is not None:
            return np.array(ex.evaluate_all(self.alpha_exprs, q))
        return self._alpha_interp.at(q)

    def beta_at(self, q) -> np.ndarray:
        if self.beta_exprs is not None:
            flat = ex.evaluate_all([e for row in self.beta_exprs for e in row], q)
            return np.array(flat).reshape(self.m, self.m)
        return self._beta_interp.at(q)

    def inverse(self) -> "FeedbackPair":
        """The feedback undoing this one (group structure of pure feedback)."""
        m = self.m
        beta_inv = np.linalg.inv(self.beta_values) if m else self.beta_values.copy()
        alpha_inv = (
            -np.linalg.solve(np.transpose(self.beta_values, (0, 2, 1)), self.alpha_values[:, :, None])[:, :, 0]
            if m
            else self.alpha_values.copy()
        )
        alpha_exprs = beta_exprs = None
        if self.is_symbolic() and m:
            try:
                beta_cols = [
                    symlin.solve_square_expr(
                        self.beta_exprs, [ex.ONE if r == j else ex.ZERO for r in range(m)]
                    )
                    for j in range(m)
                ]
                beta_exprs = [[beta_cols[j][i] for j in range(m)] for i in range(m)]
                beta_t = [[self.beta_exprs[j][i] for j in range(m)] for i in range(m)]
                hat = symlin.solve_square_expr(beta_t, list(self.alpha_exprs))
                alpha_exprs = [ex.neg(e) for e in hat]
            except ex.ExprError:
                alpha_exprs = beta_exprs = None
        return FeedbackPair(
            grid=self.grid,
            alpha_values=alpha_inv,
            beta_values=beta_inv,
            alpha_exprs=alpha_exprs,
            beta_exprs=beta_exprs,
        )


def assemble_feedback(
    grid: GridSpec,
    alpha_values: np.ndarray,
    beta_values: np.ndarray,
    alpha_exprs=None,
    beta_exprs=None,
) -> FeedbackPair:
    return FeedbackPair(
        grid=grid,
        alpha_values=alpha_values,
        beta_values=beta_values,
        alpha_exprs=alpha_exprs,
        beta_exprs=beta_exprs,
    )


def apply_feedback(system: AffineSystem, fb: FeedbackPair) -> AffineSystem:
    """Closed-loop system: drift + sum_i control_i alpha_i and gains beta rows.

    Symbolic composition when both the system and the feedback carry closed
    forms; otherwise fields are tabulated on the feedback grid and
    interpolated.
    """
    if fb.m != system.m:
        raise ValueError(f"feedback size {fb.m} does not match control count {system.m}")
    chart = system.chart
    if system.is_symbolic() and fb.is_symbolic():
        drift_comps = []
        for c in range(chart.n):
            acc = system.drift.components[c]
            for i, g in enumerate(system.controls):
                acc = ex.add(acc, ex.mul(g.components[c], fb.alpha_exprs[i]))
            drift_comps.append(acc)
        controls = []
        for i in range(fb.m):
            comps = []
            for c in range(chart.n):
                acc: ScalarExpr = ex.ZERO
                for j, g in enumerate(system.controls):
                    acc = ex.add(acc, ex.mul(fb.beta_exprs[i][j], g.components[c]))
                comps.append(acc)
            controls.append(VectorFieldExpr(tuple(comps)))
        return AffineSystem(chart=chart, drift=VectorFieldExpr(tuple(drift_comps)), controls=tuple(controls))

    points = fb.grid.nodes()
    gvals = [g.values_on(points) for g in system.controls]  # each (N, n)
    drift_vals = system.drift.values_on(points)
    new_drift = drift_vals.copy()
    for i in range(system.m):
        new_drift += fb.alpha_values[:, i : i + 1] * gvals[i]
    new_controls = []
    for i in range(fb.m):
        acc = np.zeros_like(drift_vals)
        for j in range(system.m):
            acc += fb.beta_values[:, i, j : j + 1] * gvals[j]
        new_controls.append(GridVectorField(fb.grid, acc))
    base = np.clip(
        np.asarray(chart.base_point),
        [lo for lo, _ in fb.validity_box],
        [hi for _, hi in fb.validity_box],
    )
    sub_chart = ChartSpec(n=chart.n, k=chart.k, box=fb.validity_box, base_point=tuple(base))
    return AffineSystem(
        chart=sub_chart,
        drift=GridVectorField(fb.grid, new_drift),
        controls=tuple(new_controls),
    )
