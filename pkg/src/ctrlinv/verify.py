"""Independent numerical verification of (closed-loop) systems.

Nothing here reuses the symbolic bracket path: projected brackets are
re-derived by central finite differences of field values, and the geometric
meaning of invariance is probed directly by simulating from two points of
the same leaf and watching the transversal coordinates agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import AffineSystem
from .grids import GridSpec

__all__ = [
    "Trajectory",
    "VerificationReport",
    "PiecewiseConstantControl",
    "bracket_residuals",
    "simulate",
    "leaf_invariance_test",
]


@dataclass
class PiecewiseConstantControl:
    """Right-continuous step control: value[i] on [times[i], times[i+1])."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.times.ndim != 1 or len(self.times) != self.values.shape[0]:
            raise ValueError("one value row per breakpoint required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(idx, 0)]


def _control_function(u, m: int):
    if u is None:
        constant = np.zeros(m)
        return lambda t: constant
    if isinstance(u, PiecewiseConstantControl):
        return u.at
    if callable(u):
        return lambda t: np.asarray(u(t), dtype=float)
    constant = np.asarray(u, dtype=float).reshape(m)
    return lambda t: constant


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    step: float
    truncated: bool = False

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def simulate(system: AffineSystem, u, x0, T: float, h: float) -> Trajectory:
    """Fixed-step classical 4th-order integration of the controlled flow.

    The trajectory is truncated (and flagged) as soon as a step would leave
    the chart box.  Identical inputs produce bitwise-identical output.
    """
    chart = system.chart
    if h <= 0:
        raise ValueError(f"integration step must be positive, got {h}")
    if T <= 0:
        raise ValueError(f"horizon must be positive, got {T}")
    x0 = np.asarray(x0, dtype=float)
    if not chart.contains_point(x0):
        raise ValueError(f"initial state {tuple(x0)} is outside the chart box")
    uf = _control_function(u, system.m)

    def rate(x: np.ndarray, uvals) -> np.ndarray:
        out = np.asarray(system.drift.eval_at(x), dtype=float)
        for i, g in enumerate(system.controls):
            out = out + uvals[i] * np.asarray(g.eval_at(x), dtype=float)
        return out

    steps = max(1, int(round(T / h)))
    dt = T / steps
    times = [0.0]
    states = [x0.copy()]
    x = x0.copy()
    truncated = False
    for s in range(steps):
        t = s * dt
        # the control is sampled once per step (zero-order hold), so all four
        # stages see the same value even when a breakpoint falls inside
        uvals = uf(t) if system.m else ()
        k1 = rate(x, uvals)
        k2 = rate(x + dt / 2.0 * k1, uvals)
        k3 = rate(x + dt / 2.0 * k2, uvals)
        k4 = rate(x + dt * k3, uvals)
        x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not chart.contains_point(x_next):
            truncated = True
            break
        x = x_next
        times.append(t + dt)
        states.append(x.copy())
    return Trajectory(
        times=np.array(times), states=np.stack(states), step=dt, truncated=truncated
    )


@dataclass
class VerificationReport:
    """Finite-difference bracket residual maxima and leaf-test deviations."""

    fd_step: float
    field_residuals: dict[str, float] = field(default_factory=dict)
    leaf_deviation: float | None = None

    @property
    def worst_residual(self) -> float:
        return max(self.field_residuals.values()) if self.field_residuals else 0.0


def bracket_residuals(system: AffineSystem, grid: GridSpec, h: float = 1e-4) -> VerificationReport:
    """Projected brackets with the leaf directions by central differences.

    For each field and leaf axis, differentiates the field's trailing
    components along the axis with step ``h`` (the stencil is slid inward at
    box edges) and reports the max norm per field.  This is independent of
    the symbolic bracket computation.
    """
    chart = system.chart
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    points = grid.nodes()
    labels = [("f", system.drift)] + [(f"g{i+1}", g) for i, g in enumerate(system.controls)]
    residuals: dict[str, float] = {}
    for label, fld in labels:
        worst = 0.0
        for axis in range(1, chart.k + 1):
            lo, hi = chart.box[axis - 1]
            center = np.clip(points[:, axis - 1], lo + h, hi - h)
            plus = points.copy()
            plus[:, axis - 1] = center + h
            minus = points.copy()
            minus[:, axis - 1] = center - h
            deriv = (fld.values_on(plus)[:, chart.k :] - fld.values_on(minus)[:, chart.k :]) / (2.0 * h)
            worst = max(worst, float(np.max(np.linalg.norm(deriv, axis=1))) if deriv.size else 0.0)
        residuals[label] = worst
    return VerificationReport(fd_step=h, field_residuals=residuals)


def leaf_invariance_test(system: AffineSystem, x0, x0p, u, T: float, h: float) -> float:
    """Max transversal deviation between flows started on the same leaf.

    Both starts must agree in coordinates k+1..n.  For a system whose fields
    all preserve the distribution, the transversal coordinates evolve
    identically regardless of the leaf position of the start.
    """
    chart = system.chart
    x0 = np.asarray(x0, dtype=float)
    x0p = np.asarray(x0p, dtype=float)
    if np.max(np.abs(x0[chart.k :] - x0p[chart.k :])) > 1e-12:
        raise ValueError("start points must agree in the transversal coordinates")
    traj_a = simulate(system, u, x0, T, h)
    traj_b = simulate(system, u, x0p, T, h)
    common = min(len(traj_a.times), len(traj_b.times))
    diff = traj_a.states[:common, chart.k :] - traj_b.states[:common, chart.k :]
    return float(np.max(np.linalg.norm(diff, axis=1)))
