"""Scikit-learn style front end for the check -> synthesize -> verify pipeline.

``FeedbackSynthesizer`` is a transformer over affine control systems: ``fit``
decides invariance on a grid and, when the verdict allows it, synthesizes
the feedback pair; ``transform`` applies the fitted feedback to a system.
Configuration lives in constructor parameters (so ``get_params`` /
``set_params`` / ``clone`` compose with the usual tooling), results in
trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .geometry import AffineSystem
from .grids import GridSpec
from .invariance import (
    INVARIANT,
    check_local_invariance,
    extract_alpha_coeffs,
    extract_gamma,
)
from .synthesis import (
    DriftCoefficients,
    FeedbackPair,
    apply_feedback,
    integrate_drift_coeffs,
    integrate_drift_coeffs_symbolic,
    synthesize_alpha,
    synthesize_beta,
)
from .transport import IllConditionedError, assemble_A, build_zbar
from .verify import bracket_residuals, leaf_invariance_test
from . import expr as ex

__all__ = ["FeedbackSynthesizer", "validate_system"]


def validate_system(system: AffineSystem) -> AffineSystem:
    """Check that a system is usable for the invariance pipeline."""
    if not isinstance(system, AffineSystem):
        raise TypeError(f"expected an AffineSystem, got {type(system).__name__}")
    if system.chart.k < 1:
        raise ValueError("the distribution rank must be at least 1 for invariance analysis")
    if not system.is_symbolic():
        raise TypeError("fit requires symbolic drift and control fields")
    return system


class FeedbackSynthesizer(BaseEstimator):
    """Decide local controlled invariance and synthesize the feedback pair.

    Parameters
    ----------
    grid_nodes : int or sequence of int, default 9
        Nodes per axis of the decision grid.
    tol : float, default 1e-8
        Relative residual tolerance of the pointwise invariance conditions.
    fd_step : float, default 1e-4
        Step of the finite-difference bracket verification.
    sim_step : float, default 1e-3
        Integrator step for the leaf simulations.
    cond_limit : float, default 1e8
        Condition-number bound for inverting the frame-change matrix.
    run_verification : bool, default True
        Run the independent finite-difference / simulation checks after
        synthesis.
    leaf_horizon : float, default 1.0
        Time horizon of the leaf-decoupling simulations.
    n_leaf_pairs : int, default 3
        Number of random same-leaf start pairs per verification.
    seed : int, default 0
        Seed for the randomized verification probes.

    Attributes (after ``fit``)
    --------------------------
    verdict_ : str; report_ : InvarianceReport; rank_profile_ : RankProfile;
    feedback_ : FeedbackPair or None; transformed_system_ : AffineSystem or
    None; verification_ : VerificationReport or None; advisory_box_ :
    validity sub-box when the full box was not invertible.
    """

    def __init__(
        self,
        grid_nodes=9,
        tol=1e-8,
        fd_step=1e-4,
        sim_step=1e-3,
        cond_limit=1e8,
        run_verification=True,
        leaf_horizon=1.0,
        n_leaf_pairs=3,
        seed=0,
    ):
        self.grid_nodes = grid_nodes
        self.tol = tol
        self.fd_step = fd_step
        self.sim_step = sim_step
        self.cond_limit = cond_limit
        self.run_verification = run_verification
        self.leaf_horizon = leaf_horizon
        self.n_leaf_pairs = n_leaf_pairs
        self.seed = seed

    # ------------------------------------------------------------------
    def fit(self, X: AffineSystem, y=None):
        system = validate_system(X)
        chart = system.chart
        self.system_ = system
        self.grid_ = GridSpec.uniform(chart, self.grid_nodes)
        self.report_ = check_local_invariance(system, self.grid_, tol=self.tol)
        self.rank_profile_ = self.report_.rank_profile
        self.verdict_ = self.report_.verdict
        self.feedback_ = None
        self.transformed_system_ = None
        self.verification_ = None
        self.advisory_box_ = None
        self.synthesis_error_ = None
        if self.verdict_ != INVARIANT:
            return self

        self.zbar_ = build_zbar(system)
        self.gamma_ = extract_gamma(system, self.grid_, tol=self.tol)
        grid = self.grid_
        try:
            self.a_field_ = assemble_A(system, self.zbar_, grid, cond_limit=self.cond_limit)
        except IllConditionedError as err:
            self.advisory_box_ = err.advisory_box
            if err.advisory_box is None:
                self.a_field_ = err.field
                self.synthesis_error_ = str(err)
                return self
            grid = self._restrict_grid(err.advisory_box)
            self.a_field_ = assemble_A(system, self.zbar_, grid, cond_limit=self.cond_limit)

        self.alpha_coeffs_ = extract_alpha_coeffs(system, self.zbar_, grid, tol=self.tol)
        btilde = integrate_drift_coeffs(self.alpha_coeffs_, chart, grid)
        if self.alpha_coeffs_.exprs is not None:
            try:
                btilde_exprs = integrate_drift_coeffs_symbolic(self.alpha_coeffs_.exprs, chart)
                exact = np.stack(
                    [ex.evaluate_many(e, grid.nodes()) for e in btilde_exprs], axis=1
                ) if btilde_exprs else np.zeros((grid.num_nodes, 0))
                btilde = DriftCoefficients(grid=grid, values=exact, exprs=btilde_exprs)
            except ex.NotPolynomialError:
                pass
        self.drift_coeffs_ = btilde

        if system.m == 0:
            self.feedback_ = FeedbackPair(
                grid=grid,
                alpha_values=np.zeros((grid.num_nodes, 0)),
                beta_values=np.zeros((grid.num_nodes, 0, 0)),
                alpha_exprs=[],
                beta_exprs=[],
            )
        else:
            beta_values, beta_exprs = synthesize_beta(self.a_field_, cond_limit=self.cond_limit)
            alpha_values, alpha_exprs = synthesize_alpha(btilde, self.zbar_, self.a_field_, grid)
            self.feedback_ = FeedbackPair(
                grid=grid,
                alpha_values=alpha_values,
                beta_values=beta_values,
                alpha_exprs=alpha_exprs,
                beta_exprs=beta_exprs,
            )
        self.transformed_system_ = apply_feedback(system, self.feedback_)
        if self.run_verification:
            self.verification_ = self._verify(grid)
        return self

    # ------------------------------------------------------------------
    def transform(self, X: AffineSystem = None):
        """Apply the fitted feedback; with no argument, to the fitted system."""
        if not hasattr(self, "verdict_"):
            raise NotFittedError("call fit before transform")
        if self.feedback_ is None:
            raise RuntimeError(
                f"no feedback was synthesized (verdict: {self.verdict_}"
                + (f"; {self.synthesis_error_}" if self.synthesis_error_ else "")
                + ")"
            )
        if X is None or X is self.system_:
            return self.transformed_system_
        return apply_feedback(X, self.feedback_)

    def fit_transform(self, X: AffineSystem, y=None):
        return self.fit(X, y).transform(X)

    # ------------------------------------------------------------------
    def _restrict_grid(self, box) -> GridSpec:
        axes = []
        for axis, (lo, hi) in zip(self.grid_.axes, box):
            arr = np.asarray(axis)
            keep = arr[(arr >= lo - 1e-12) & (arr <= hi + 1e-12)]
            axes.append(tuple(keep))
        chart = self.system_.chart
        base = np.clip(np.asarray(chart.base_point), [lo for lo, _ in box], [hi for _, hi in box])
        sub_chart = type(chart)(n=chart.n, k=chart.k, box=tuple(box), base_point=tuple(base))
        return GridSpec(chart=sub_chart, axes=tuple(axes))

    def _verify(self, grid: GridSpec):
        report = bracket_residuals(self.transformed_system_, grid, h=self.fd_step)
        chart = self.transformed_system_.chart
        rng = np.random.default_rng(self.seed)
        lo = np.array([b[0] for b in chart.box])
        hi = np.array([b[1] for b in chart.box])
        mid = (lo + hi) / 2.0
        half = (hi - lo) / 2.0
        worst = 0.0
        m = self.transformed_system_.m
        for _ in range(self.n_leaf_pairs):
            base = mid + 0.3 * half * rng.uniform(-1.0, 1.0, size=chart.n)
            x0 = base.copy()
            x0p = base.copy()
            x0[: chart.k] = mid[: chart.k] + 0.5 * half[: chart.k] * rng.uniform(-1, 1, chart.k)
            x0p[: chart.k] = mid[: chart.k] + 0.5 * half[: chart.k] * rng.uniform(-1, 1, chart.k)
            for u in (None, 0.3 * np.ones(m) if m else None):
                dev = leaf_invariance_test(
                    self.transformed_system_, x0, x0p, u, self.leaf_horizon, self.sim_step
                )
                worst = max(worst, dev)
        report.leaf_deviation = worst
        return report
