"""Charts, vector fields, Lie brackets, and the quotient connection.

Everything here works in a flat chart: the distribution is the span of the
first ``k`` coordinate fields, its leaves are the slices with fixed trailing
coordinates, and a class in the quotient of the tangent space by the
distribution is represented by the trailing ``n - k`` components of any
representative.  The connection acting along leaf directions is the
projected Lie bracket; in these coordinates it reduces to differentiating
the trailing components along the leaf coordinates, which is what makes the
whole construction computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .expr import ScalarExpr

__all__ = [
    "ChartSpec",
    "VectorFieldExpr",
    "QuotientSection",
    "AffineSystem",
    "NotInDistributionError",
    "coordinate_field",
    "lie_bracket",
    "lie_derivative",
    "quotient_project",
    "lift",
    "connection_apply",
    "curvature_residual",
]


class NotInDistributionError(ValueError):
    """Raised when a vector field is not a section of the distribution."""


@dataclass(frozen=True)
class ChartSpec:
    """Flat chart data: dimension n, distribution rank k, box, base point.

    The box is a product of closed intervals.  The slice {x1 = ... = xk = 0}
    must meet the box (the closed-form parallel sections are built by
    evaluating on it), so every leaf-axis interval must contain 0.  ``k = 0``
    is accepted for pure rank profiling of control spans; the invariance and
    synthesis machinery requires ``1 <= k < n``.
    """

    n: int
    k: int
    box: tuple[tuple[float, float], ...]
    base_point: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"state dimension must be >= 1, got {self.n}")
        if not 0 <= self.k < self.n:
            raise ValueError(f"distribution rank must satisfy 0 <= k < n, got k={self.k}, n={self.n}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != self.n:
            raise ValueError(f"box has {len(box)} intervals for dimension {self.n}")
        for axis, (lo, hi) in enumerate(box, start=1):
            if not lo < hi:
                raise ValueError(f"degenerate interval [{lo}, {hi}] on axis {axis}")
            if axis <= self.k and not lo <= 0.0 <= hi:
                raise ValueError(
                    f"leaf axis {axis} interval [{lo}, {hi}] must contain 0 "
                    "(the zero slice must meet the box)"
                )
        object.__setattr__(self, "box", box)
        base = tuple(float(v) for v in self.base_point) if self.base_point else (0.0,) * self.n
        if len(base) != self.n:
            raise ValueError(f"base point has dimension {len(base)}, expected {self.n}")
        if not self.contains_point(base, box=box):
            raise ValueError(f"base point {base} lies outside the box")
        object.__setattr__(self, "base_point", base)

    @classmethod
    def symmetric(cls, n: int, k: int, halfwidth: float = 1.0) -> "ChartSpec":
        return cls(n=n, k=k, box=tuple((-halfwidth, halfwidth) for _ in range(n)))

    def contains_point(self, q, box=None) -> bool:
        box = self.box if box is None else box
        return all(lo <= float(v) <= hi for v, (lo, hi) in zip(q, box))

    def slice_point(self, q) -> np.ndarray:
        """Project a point onto the zero slice of the leaf coordinates."""
        out = np.array(q, dtype=float)
        out[: self.k] = 0.0
        return out


@dataclass(frozen=True)
class VectorFieldExpr:
    """A vector field as n symbolic components."""

    components: tuple[ScalarExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def n(self) -> int:
        return len(self.components)

    @classmethod
    def from_strings(cls, texts, n: int) -> "VectorFieldExpr":
        if len(texts) != n:
            raise ValueError(f"expected {n} component expressions, got {len(texts)}")
        return cls(tuple(ex.parse_expr(t, n) for t in texts))

    @classmethod
    def zero(cls, n: int) -> "VectorFieldExpr":
        return cls((ex.ZERO,) * n)

    def eval_at(self, q) -> np.ndarray:
        return np.array(ex.evaluate_all(self.components, q))

    def values_on(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.stack([ex.evaluate_many(c, points) for c in self.components], axis=-1)

    def __str__(self) -> str:
        return "(" + ", ".join(ex.to_string(c) for c in self.components) + ")"


@dataclass(frozen=True)
class QuotientSection:
    """A class in the quotient bundle: the n-k trailing components."""

    components: tuple[ScalarExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def size(self) -> int:
        return len(self.components)

    def eval_at(self, q) -> np.ndarray:
        return np.array(ex.evaluate_all(self.components, q))

    def values_on(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.stack([ex.evaluate_many(c, points) for c in self.components], axis=-1)

    def is_zero(self) -> bool:
        return all(ex.is_zero_expanded(c) for c in self.components)

    def __str__(self) -> str:
        return "(" + ", ".join(ex.to_string(c) for c in self.components) + ")"


@dataclass(frozen=True)
class AffineSystem:
    """Drift plus control vector fields over a chart.

    Control fields may be symbolic (VectorFieldExpr) or any object exposing
    ``n``, ``eval_at`` and ``values_on`` (grid-tabulated fields after
    feedback application).  ``m = 0`` is allowed: the invariance check then
    demands that the drift itself is already parallel.
    """

    chart: ChartSpec
    drift: object
    controls: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.drift.n != self.chart.n:
            raise ValueError(f"drift dimension {self.drift.n} does not match chart n={self.chart.n}")
        for i, g in enumerate(self.controls, start=1):
            if g.n != self.chart.n:
                raise ValueError(f"control {i} dimension {g.n} does not match chart n={self.chart.n}")

    @property
    def m(self) -> int:
        return len(self.controls)

    def is_symbolic(self) -> bool:
        return isinstance(self.drift, VectorFieldExpr) and all(
            isinstance(g, VectorFieldExpr) for g in self.controls
        )


def coordinate_field(n: int, i: int) -> VectorFieldExpr:
    """The i-th coordinate vector field."""
    if not 1 <= i <= n:
        raise ValueError(f"axis {i} out of range for dimension {n}")
    return VectorFieldExpr(tuple(ex.ONE if j == i else ex.ZERO for j in range(1, n + 1)))


def lie_bracket(X: VectorFieldExpr, Y: VectorFieldExpr) -> VectorFieldExpr:
    """Coordinate Lie bracket [X, Y], component j = sum_i X_i dY_j/dx_i - Y_i dX_j/dx_i."""
    if X.n != Y.n:
        raise ValueError(f"dimension mismatch: {X.n} vs {Y.n}")
    n = X.n
    out = []
    for j in range(n):
        acc: ScalarExpr = ex.ZERO
        for i in range(1, n + 1):
            acc = ex.add(acc, ex.mul(X.components[i - 1], ex.diff(Y.components[j], i)))
            acc = ex.sub(acc, ex.mul(Y.components[i - 1], ex.diff(X.components[j], i)))
        out.append(acc)
    return VectorFieldExpr(tuple(out))


def lie_derivative(f: ScalarExpr, X: VectorFieldExpr) -> ScalarExpr:
    """Derivative of the function f along the field X."""
    acc: ScalarExpr = ex.ZERO
    for i in range(1, X.n + 1):
        acc = ex.add(acc, ex.mul(X.components[i - 1], ex.diff(f, i)))
    return acc


def quotient_project(Y: VectorFieldExpr, chart: ChartSpec) -> QuotientSection:
    """Projection to the quotient: keep components k+1..n."""
    if Y.n != chart.n:
        raise ValueError(f"field dimension {Y.n} does not match chart n={chart.n}")
    return QuotientSection(Y.components[chart.k :])


def lift(Ybar: QuotientSection, chart: ChartSpec) -> VectorFieldExpr:
    """Canonical lift: zero leaf components, then the section's components."""
    if Ybar.size != chart.n - chart.k:
        raise ValueError(f"section size {Ybar.size} does not match n-k={chart.n - chart.k}")
    return VectorFieldExpr((ex.ZERO,) * chart.k + Ybar.components)


def _check_in_distribution(X: VectorFieldExpr, chart: ChartSpec, tol: float = 1e-12) -> None:
    """Verify that the trailing components of X vanish on the box."""
    suspect = [c for c in X.components[chart.k :] if not ex.is_zero_expanded(c)]
    if not suspect:
        return
    probes = _probe_points(chart)
    for c in suspect:
        vals = ex.evaluate_many(c, probes)
        worst = float(np.max(np.abs(vals)))
        if worst > tol:
            raise NotInDistributionError(
                f"transversal component '{ex.to_string(c)}' reaches {worst:.3g} on the box"
            )


def _probe_points(chart: ChartSpec, per_axis: int = 5) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in chart.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def connection_apply(X: VectorFieldExpr, Ybar: QuotientSection, chart: ChartSpec) -> QuotientSection:
    """Covariant derivative of the class Ybar along X, for X a section of D.

    Computed as the projection of [X, lift(Ybar)]; in the flat chart this is
    the derivative of Ybar's components along X.
    """
    _check_in_distribution(X, chart)
    return quotient_project(lie_bracket(X, lift(Ybar, chart)), chart)


def curvature_residual(Ybar: QuotientSection, i: int, j: int, chart: ChartSpec) -> QuotientSection:
    """Mixed second covariant derivatives along axes i and j, antisymmetrized.

    The connection is flat, so this is identically zero; polynomial inputs
    cancel exactly under monomial expansion and the result constant-folds to
    the zero section.
    """
    if not (1 <= i <= chart.k and 1 <= j <= chart.k):
        raise ValueError(f"axes ({i}, {j}) must be leaf axes <= k={chart.k}")
    ei = coordinate_field(chart.n, i)
    ej = coordinate_field(chart.n, j)
    forward = connection_apply(ei, connection_apply(ej, Ybar, chart), chart)
    backward = connection_apply(ej, connection_apply(ei, Ybar, chart), chart)
    out = tuple(
        ex.fold_difference(ex.sub(a, b))
        for a, b in zip(forward.components, backward.components)
    )
    return QuotientSection(out)
