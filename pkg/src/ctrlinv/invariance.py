"""Grid decision of local controlled invariance and coefficient extraction.

The invariance conditions are module conditions; what a finite grid can
decide is their pointwise shadow: at every node the projected bracket of
each leaf direction with each field must lie in the pointwise span of the
projected controls.  When the quotient span has constant rank over the grid
the two notions coincide, and the verdict is ``invariant``.  When a residual
fails the pointwise necessary condition the verdict is ``not_invariant``.
When all residuals pass but the quotient rank drops somewhere, pointwise
data cannot certify the module condition and the verdict is
``inconclusive_singular``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import symlin
from .geometry import AffineSystem, VectorFieldExpr, quotient_project
from .grids import GridSpec, MultilinearGrid

__all__ = [
    "INVARIANT",
    "NOT_INVARIANT",
    "INCONCLUSIVE_SINGULAR",
    "RankProfile",
    "OffendingCondition",
    "InvarianceReport",
    "ConnectionCoeffs",
    "AlphaCoeffs",
    "CoefficientResidualError",
    "rank_profile",
    "check_local_invariance",
    "extract_gamma",
    "extract_alpha_coeffs",
]

INVARIANT = "invariant"
NOT_INVARIANT = "not_invariant"
INCONCLUSIVE_SINGULAR = "inconclusive_singular"

_RANK_RCOND = 1e-9


class CoefficientResidualError(RuntimeError):
    """Coefficient extraction left a residual; the invariance precondition fails."""


def _batched_ranks(mats: np.ndarray, rcond: float = _RANK_RCOND) -> np.ndarray:
    """Numerical ranks of a stack of matrices via singular values."""
    if mats.shape[-1] == 0 or mats.shape[-2] == 0:
        return np.zeros(mats.shape[0], dtype=int)
    s = np.linalg.svd(mats, compute_uv=False)
    smax = s[:, 0]
    return np.sum(s > rcond * smax[:, None], axis=1).astype(int)


def _batched_lstsq(mats: np.ndarray, rhs: np.ndarray, rcond: float = _RANK_RCOND):
    """Minimum-norm least squares for stacks: mats (N,r,m) X = rhs (N,r,s).

    Returns (X (N,m,s), residual norms (N,s)).
    """
    nstack, rows, cols = mats.shape
    if cols == 0:
        return np.zeros((nstack, 0, rhs.shape[2])), np.linalg.norm(rhs, axis=1)
    u, s, vh = np.linalg.svd(mats, full_matrices=False)
    smax = s[:, :1]
    with np.errstate(divide="ignore"):
        sinv = np.where(s > rcond * smax, 1.0 / s, 0.0)
    sinv = np.where(smax > 0.0, sinv, 0.0)
    x = np.einsum("nkm,nk,nrk,nrs->nms", vh, sinv, u, rhs)
    residual = np.linalg.norm(rhs - mats @ x, axis=1)
    return x, residual


def _control_values(system: AffineSystem, points: np.ndarray) -> np.ndarray:
    """Control field values stacked as columns: (N, n, m)."""
    if system.m == 0:
        return np.zeros((points.shape[0], system.chart.n, 0))
    return np.stack([g.values_on(points) for g in system.controls], axis=2)


@dataclass
class RankProfile:
    """Per-node ranks of the control span, of span + distribution, and of the quotient."""

    grid: GridSpec
    rank_g: np.ndarray
    rank_dg: np.ndarray
    rank_quotient: np.ndarray
    g_singular_nodes: list[int]
    quotient_singular_nodes: list[int]

    @property
    def g_regular(self) -> bool:
        return not self.g_singular_nodes

    @property
    def quotient_regular(self) -> bool:
        return not self.quotient_singular_nodes

    @property
    def singular_nodes(self) -> list[int]:
        return sorted(set(self.g_singular_nodes) | set(self.quotient_singular_nodes))

    def singular_points(self) -> np.ndarray:
        nodes = self.grid.nodes()
        return nodes[self.singular_nodes] if self.singular_nodes else np.zeros((0, self.grid.chart.n))


def rank_profile(system: AffineSystem, grid: GridSpec, rcond: float = _RANK_RCOND) -> RankProfile:
    """Rank the control span pointwise over the grid and flag rank drops.

    A node is singular when its rank differs from the maximal rank attained
    over the grid.
    """
    points = grid.nodes()
    k = system.chart.k
    gvals = _control_values(system, points)

    rank_g = _batched_ranks(gvals, rcond)
    rank_quot = _batched_ranks(gvals[:, k:, :], rcond)
    rank_dg = rank_quot + k  # D is spanned by the first k coordinate fields

    def drops(ranks: np.ndarray) -> list[int]:
        if ranks.size == 0:
            return []
        top = int(ranks.max())
        return [int(i) for i in np.nonzero(ranks < top)[0]]

    return RankProfile(
        grid=grid,
        rank_g=rank_g,
        rank_dg=rank_dg,
        rank_quotient=rank_quot,
        g_singular_nodes=drops(rank_g),
        quotient_singular_nodes=drops(rank_quot),
    )


@dataclass
class OffendingCondition:
    node_index: int
    point: tuple[float, ...]
    field: str  # "f" or "g<i>"
    axis: int  # leaf axis of the bracket
    residual: float
    threshold: float


@dataclass
class InvarianceReport:
    verdict: str
    tol: float
    worst_residual_drift: float
    worst_residual_controls: float
    rank_profile: RankProfile
    offending: list[OffendingCondition] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == INVARIANT


def _bracket_columns(system: AffineSystem):
    """Symbolic quotient components of [d/dx_j, X] for each field and leaf axis.

    In the flat chart the projected bracket with a coordinate leaf field is
    the derivative of the quotient components along that axis.
    """
    chart = system.chart
    labels, columns = [], []
    fields = [("f", system.drift)] + [(f"g{i+1}", g) for i, g in enumerate(system.controls)]
    for label, fld in fields:
        if not isinstance(fld, VectorFieldExpr):
            raise TypeError(f"field {label} is not symbolic; the grid check needs expressions")
        quot = quotient_project(fld, chart).components
        for axis in range(1, chart.k + 1):
            labels.append((label, axis))
            columns.append([ex.diff(c, axis) for c in quot])
    return labels, columns


def check_local_invariance(system: AffineSystem, grid: GridSpec, tol: float = 1e-8) -> InvarianceReport:
    """Decide the invariance conditions on the grid.

    For every node, every leaf axis j and every field X in {f, g_1..g_m} the
    least-squares residual of the projected bracket against
    span{projected controls at the node} must satisfy
    residual <= tol * (1 + ||bracket||).
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    chart = system.chart
    points = grid.nodes()
    profile = rank_profile(system, grid)

    labels, columns = _bracket_columns(system)
    if not columns:  # k = 0: no leaf directions, nothing to check
        return InvarianceReport(
            verdict=INVARIANT if profile.quotient_regular else INCONCLUSIVE_SINGULAR,
            tol=tol,
            worst_residual_drift=0.0,
            worst_residual_controls=0.0,
            rank_profile=profile,
        )

    rhs = np.stack(
        [
            np.stack([ex.evaluate_many(c, points) for c in col], axis=1)
            for col in columns
        ],
        axis=2,
    )  # (N, n-k, S)
    span = _control_values(system, points)[:, chart.k :, :]
    _, residuals = _batched_lstsq(span, rhs)  # (N, S)
    norms = np.linalg.norm(rhs, axis=1)
    thresholds = tol * (1.0 + norms)
    bad = residuals > thresholds

    offending = []
    for node_idx, col_idx in zip(*np.nonzero(bad)):
        label, axis = labels[col_idx]
        offending.append(
            OffendingCondition(
                node_index=int(node_idx),
                point=tuple(points[node_idx]),
                field=label,
                axis=axis,
                residual=float(residuals[node_idx, col_idx]),
                threshold=float(thresholds[node_idx, col_idx]),
            )
        )

    drift_cols = [i for i, (label, _) in enumerate(labels) if label == "f"]
    control_cols = [i for i, (label, _) in enumerate(labels) if label != "f"]
    worst_drift = float(residuals[:, drift_cols].max()) if drift_cols else 0.0
    worst_controls = float(residuals[:, control_cols].max()) if control_cols else 0.0

    if offending:
        verdict = NOT_INVARIANT
    elif not profile.quotient_regular:
        verdict = INCONCLUSIVE_SINGULAR
    else:
        verdict = INVARIANT
    return InvarianceReport(
        verdict=verdict,
        tol=tol,
        worst_residual_drift=worst_drift,
        worst_residual_controls=worst_controls,
        rank_profile=profile,
        offending=offending,
    )


@dataclass
class ConnectionCoeffs:
    """Connection coefficients: values[node, i-1, j-1, l-1] = gamma^l_{ij}.

    gamma^l_{ij} expands the covariant derivative of the j-th projected
    control along leaf axis i over the projected controls.  ``exprs`` holds
    closed forms (exprs[i-1][j-1] is a list of m expressions) when the frame
    was pointwise invertible enough to extract them; transport evaluates
    those exactly and falls back to multilinear interpolation otherwise.
    """

    grid: GridSpec
    values: np.ndarray  # (N, k, m, m)
    residuals: np.ndarray  # (N, k, m)
    exprs: list | None = None

    def __post_init__(self):
        k = self.grid.chart.k
        m = self.values.shape[2]
        self._interp = MultilinearGrid(self.grid, self.values.reshape(self.grid.shape + (k, m, m)))

    @property
    def m(self) -> int:
        return self.values.shape[2]

    def matrix_at(self, point, axis: int) -> np.ndarray:
        """ODE matrix along a leaf axis: entry [j, a] = gamma^a_{axis j}."""
        if self.exprs is not None:
            row = self.exprs[axis - 1]
            flat = ex.evaluate_all([c for coeffs in row for c in coeffs], point)
            return np.array(flat).reshape(self.m, self.m)
        return self._interp.at(point)[axis - 1]


def _symbolic_coefficients(frame_comps, rhs_columns, points, numeric, tol=1e-6):
    """Try Cramer closed forms for least-squares coefficients; validate on nodes.

    frame_comps: list over frame members of their component expressions.
    rhs_columns: list of component-expression lists.
    numeric: (N, len(rhs_columns), m) reference values.
    Returns a list over columns of coefficient expression lists, or None.
    """
    mat = [[frame_comps[j][r] for j in range(len(frame_comps))] for r in range(len(frame_comps[0]))]
    out = []
    try:
        for col in rhs_columns:
            out.append(symlin.solve_normal_expr(mat, list(col)))
    except (ZeroDivisionError, ex.ExprError):
        return None
    for c, coeffs in enumerate(out):
        for j, coeff in enumerate(coeffs):
            try:
                vals = ex.evaluate_many(coeff, points)
            except ex.ExprError:
                return None
            ref = numeric[:, c, j]
            if np.max(np.abs(vals - ref)) > tol * (1.0 + np.max(np.abs(ref))):
                return None
    return out


def extract_gamma(system: AffineSystem, grid: GridSpec, tol: float = 1e-8) -> ConnectionCoeffs:
    """Extract gamma^l_{ij} at every node by minimum-norm least squares.

    Requires an invariant verdict; a residual above tol * (1 + ||rhs||)
    signals a violated precondition and raises CoefficientResidualError.
    """
    chart = system.chart
    k, m = chart.k, system.m
    points = grid.nodes()
    span = _control_values(system, points)[:, k:, :]

    columns = []
    quotients = [quotient_project(g, chart).components for g in system.controls]
    for i in range(1, k + 1):
        for j in range(m):
            columns.append([ex.diff(c, i) for c in quotients[j]])
    if columns:
        rhs = np.stack(
            [np.stack([ex.evaluate_many(c, points) for c in col], axis=1) for col in columns],
            axis=2,
        )
        coeffs, residuals = _batched_lstsq(span, rhs)
        norms = np.linalg.norm(rhs, axis=1)
        worst = float(np.max(residuals)) if residuals.size else 0.0
        if np.any(residuals > tol * (1.0 + norms)):
            raise CoefficientResidualError(
                f"connection-coefficient residual {worst:.3g} exceeds tolerance; "
                "the system does not satisfy the invariance precondition"
            )
        values = np.transpose(coeffs.reshape(len(points), m, k, m), (0, 2, 3, 1))
        res = residuals.reshape(len(points), k, m)
    else:
        values = np.zeros((len(points), k, m, m))
        res = np.zeros((len(points), k, m))

    exprs = None
    if m > 0 and k > 0 and system.is_symbolic():
        numeric = values.reshape(len(points), k * m, m)
        closed = _symbolic_coefficients([list(q) for q in quotients], columns, points, numeric)
        if closed is not None:
            exprs = [[closed[(i - 1) * m + j] for j in range(m)] for i in range(1, k + 1)]
    return ConnectionCoeffs(grid=grid, values=values, residuals=res, exprs=exprs)


@dataclass
class AlphaCoeffs:
    """Drift coefficients: values[node, i-1, j-1] expands the covariant
    derivative of the projected drift along leaf axis i over the parallel
    frame members."""

    grid: GridSpec
    values: np.ndarray  # (N, k, m)
    residuals: np.ndarray  # (N, k)
    exprs: list | None = None  # exprs[i-1][j-1]


def extract_alpha_coeffs(system: AffineSystem, zbar, grid: GridSpec, tol: float = 1e-8) -> AlphaCoeffs:
    """Expand the projected drift's leaf derivatives over the parallel frame."""
    chart = system.chart
    k, m = chart.k, len(zbar)
    points = grid.nodes()
    frame = (
        np.stack([z.values_on(points) for z in zbar], axis=2)
        if m
        else np.zeros((len(points), chart.n - chart.k, 0))
    )

    drift_quot = quotient_project(system.drift, chart).components
    columns = [[ex.diff(c, i) for c in drift_quot] for i in range(1, k + 1)]
    if not columns:
        return AlphaCoeffs(grid=grid, values=np.zeros((len(points), 0, m)), residuals=np.zeros((len(points), 0)))
    rhs = np.stack(
        [np.stack([ex.evaluate_many(c, points) for c in col], axis=1) for col in columns],
        axis=2,
    )
    coeffs, residuals = _batched_lstsq(frame, rhs)  # (N, m, k), (N, k)
    norms = np.linalg.norm(rhs, axis=1)
    if np.any(residuals > tol * (1.0 + norms)):
        worst = float(np.max(residuals))
        raise CoefficientResidualError(
            f"drift-coefficient residual {worst:.3g} exceeds tolerance; "
            "the projected drift leaves the parallel frame span"
        )
    values = np.transpose(coeffs, (0, 2, 1))  # (N, k, m)

    exprs = None
    if m > 0 and isinstance(system.drift, VectorFieldExpr):
        closed = _symbolic_coefficients(
            [list(z.components) for z in zbar],
            columns,
            points,
            values.reshape(len(points), k, m),
        )
        if closed is not None:
            exprs = closed  # indexed [i-1][j-1]
    return AlphaCoeffs(grid=grid, values=values, residuals=residuals, exprs=exprs)
