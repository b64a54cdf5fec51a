import numpy as np
import pytest

from ctrlinv import expr as ex
from ctrlinv.expr import Const
from ctrlinv.geometry import AffineSystem, VectorFieldExpr, quotient_project
from ctrlinv.grids import GridSpec
from ctrlinv.invariance import AlphaCoeffs, check_local_invariance, extract_alpha_coeffs
from ctrlinv.synthesis import (
    FeedbackPair,
    apply_feedback,
    integrate_drift_coeffs,
    integrate_drift_coeffs_symbolic,
    synthesize_alpha,
    synthesize_beta,
)
from ctrlinv.transport import assemble_A, build_zbar
from ctrlinv.verify import bracket_residuals

from conftest import make_scrambled_fixture


def vf(texts, n):
    return VectorFieldExpr.from_strings(texts, n)


def synthesize_pipeline(system, grid, axis_order=None):
    """Module-level pipeline: frame, A, coefficients, feedback pair."""
    zbar = build_zbar(system)
    a_field = assemble_A(system, zbar, grid)
    acoef = extract_alpha_coeffs(system, zbar, grid)
    btilde = integrate_drift_coeffs(acoef, system.chart, grid, axis_order=axis_order)
    if acoef.exprs is not None:
        exprs = integrate_drift_coeffs_symbolic(acoef.exprs, system.chart, axis_order=axis_order)
        btilde.exprs = exprs
    beta_values, beta_exprs = synthesize_beta(a_field)
    alpha_values, alpha_exprs = synthesize_alpha(btilde, zbar, a_field, grid)
    return FeedbackPair(
        grid=grid,
        alpha_values=alpha_values,
        beta_values=beta_values,
        alpha_exprs=alpha_exprs,
        beta_exprs=beta_exprs,
    )


class TestSynthesizeBeta:
    def test_identity_frame_change(self, parallel_system):
        grid = GridSpec.uniform(parallel_system.chart, 5)
        a_field = assemble_A(parallel_system, build_zbar(parallel_system), grid)
        values, _ = synthesize_beta(a_field)
        np.testing.assert_allclose(values, np.ones_like(values), atol=1e-14)

    def test_running_fixture_reciprocal(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        a_field = assemble_A(running_system, build_zbar(running_system), grid)
        values, exprs = synthesize_beta(a_field)
        nodes = grid.nodes()
        np.testing.assert_allclose(values[:, 0, 0], 1 / (1 + nodes[:, 0] ** 2), atol=1e-12)
        # oracle: the rescaled control must have leaf-independent projection
        assert exprs is not None
        ghat = ex.mul(exprs[0][0], running_system.controls[0].components[2])
        for axis in (1, 2):
            d = ex.diff(ghat, axis)
            vals = ex.evaluate_many(d, nodes)
            np.testing.assert_allclose(vals, 0, atol=1e-12)

    def test_singular_frame_change_rejected(self, running_system):
        from ctrlinv.transport import AMatrixField

        grid = GridSpec.uniform(running_system.chart, 5)
        n_nodes = grid.num_nodes
        values = np.tile(np.eye(1), (n_nodes, 1, 1))
        values[0, 0, 0] = 0.0
        broken = AMatrixField(
            grid=grid,
            values=values,
            condition=np.where(np.arange(n_nodes) == 0, np.inf, 1.0),
            residuals=np.zeros(n_nodes),
            base_matrix=np.eye(1),
            base_identity_error=0.0,
        )
        with pytest.raises(ValueError, match="singular|ill-conditioned"):
            synthesize_beta(broken)

    def test_gain_is_identity_at_base(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        a_field = assemble_A(running_system, build_zbar(running_system), grid)
        values, _ = synthesize_beta(a_field)
        fb = FeedbackPair(
            grid=grid,
            alpha_values=np.zeros((grid.num_nodes, 1)),
            beta_values=values,
        )
        np.testing.assert_allclose(
            fb.beta_at(running_system.chart.base_point), np.eye(1), atol=1e-12
        )


class TestIntegrateDriftCoeffs:
    def _coeffs_from_exprs(self, exprs_by_axis, grid, m=1):
        k = len(exprs_by_axis)
        nodes = grid.nodes()
        values = np.zeros((len(nodes), k, m))
        for i, row in enumerate(exprs_by_axis):
            for j in range(m):
                values[:, i, j] = ex.evaluate_many(row[j], nodes)
        return AlphaCoeffs(grid=grid, values=values, residuals=np.zeros((len(nodes), k)), exprs=exprs_by_axis)

    def test_zero_coefficients(self, running_chart):
        grid = GridSpec.uniform(running_chart, 5)
        coeffs = self._coeffs_from_exprs([[Const(0.0)], [Const(0.0)]], grid)
        out = integrate_drift_coeffs(coeffs, running_chart, grid)
        np.testing.assert_allclose(out.values, 0, atol=1e-15)

    def test_hand_integral(self, running_chart):
        # alpha_11 = x2, alpha_21 = x1: integral 0..x2 of x1 plus 0..x1 of 0
        grid = GridSpec.uniform(running_chart, 9)
        coeffs = self._coeffs_from_exprs([[ex.Var(2)], [ex.Var(1)]], grid)
        out = integrate_drift_coeffs(coeffs, running_chart, grid)
        nodes = grid.nodes()
        np.testing.assert_allclose(out.values[:, 0], nodes[:, 0] * nodes[:, 1], atol=1e-13)

    def test_vanishes_on_slice(self, running_chart):
        grid = GridSpec.uniform(running_chart, 9)
        coeffs = self._coeffs_from_exprs(
            [[ex.parse_expr("x2^4", 3)], [ex.parse_expr("4*x1*x2^3", 3)]], grid
        )
        out = integrate_drift_coeffs(coeffs, running_chart, grid)
        nodes = grid.nodes()
        on_slice = np.all(nodes[:, :2] == 0.0, axis=1)
        np.testing.assert_allclose(out.values[on_slice], 0, atol=1e-15)

    def test_gradient_recovers_coefficients_second_order(self, running_chart):
        """Central differences of the integrals reproduce the coefficients at
        O(h^2): the defect shrinks ~4x when the stencil halves."""
        coeff_exprs = [[ex.parse_expr("x2^4", 3)], [ex.parse_expr("4*x1*x2^3", 3)]]

        def defect(nodes_per_axis, step):
            grid = GridSpec.uniform(running_chart, nodes_per_axis)
            coeffs = self._coeffs_from_exprs(coeff_exprs, grid)
            out = integrate_drift_coeffs(coeffs, running_chart, grid)
            btilde = out.values[:, 0].reshape(grid.shape)
            alpha = coeffs.values.reshape(grid.shape + (2, 1))
            h = float(np.diff(grid.axis_array(2))[0]) * step
            fd = (btilde[:, 2 * step :, :] - btilde[:, : -2 * step, :]) / (2 * h)
            ref = alpha[:, step : btilde.shape[1] - step, :, 1, 0]
            return float(np.max(np.abs(fd - ref)))

        d1 = defect(17, 1)
        d2 = defect(17, 2)
        assert d1 > 0
        assert 2.5 <= d2 / d1 <= 6.0

    def test_too_coarse_grid_rejected(self, running_chart):
        grid = GridSpec(
            chart=running_chart,
            axes=((-1.0, 0.0), tuple(np.linspace(-1, 1, 5)), tuple(np.linspace(-1, 1, 5))),
        )
        coeffs = self._coeffs_from_exprs([[Const(0.0)], [Const(0.0)]], grid)
        with pytest.raises(ValueError, match="too coarse"):
            integrate_drift_coeffs(coeffs, running_chart, grid)

    def test_symbolic_matches_grid_quadrature(self, running_chart):
        grid = GridSpec.uniform(running_chart, 9)
        exprs_by_axis = [[ex.Var(2)], [ex.Var(1)]]
        coeffs = self._coeffs_from_exprs(exprs_by_axis, grid)
        grid_path = integrate_drift_coeffs(coeffs, running_chart, grid)
        closed = integrate_drift_coeffs_symbolic(exprs_by_axis, running_chart)
        exact = ex.evaluate_many(closed[0], grid.nodes())
        np.testing.assert_allclose(grid_path.values[:, 0], exact, atol=1e-13)


class TestSynthesizeAlpha:
    def test_parallel_drift_gives_zero(self, parallel_system):
        grid = GridSpec.uniform(parallel_system.chart, 5)
        fb = synthesize_pipeline(parallel_system, grid)
        np.testing.assert_allclose(fb.alpha_values, 0, atol=1e-14)

    def test_running_fixture_closed_form(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        fb = synthesize_pipeline(running_system, grid)
        nodes = grid.nodes()
        want = -nodes[:, 0] * nodes[:, 1] / (1 + nodes[:, 0] ** 2)
        np.testing.assert_allclose(fb.alpha_values[:, 0], want, atol=1e-12)
        assert fb.alpha_exprs is not None
        # oracle: the repaired drift projection is leaf independent
        closed = apply_feedback(running_system, fb)
        drift_quot = quotient_project(closed.drift, running_system.chart).components[0]
        for axis in (1, 2):
            vals = ex.evaluate_many(ex.diff(drift_quot, axis), nodes)
            np.testing.assert_allclose(vals, 0, atol=1e-12)
        # and the transformed pair is the expected normal form at nodes
        np.testing.assert_allclose(
            closed.drift.values_on(nodes)[:, 2], nodes[:, 2], atol=1e-12
        )
        np.testing.assert_allclose(
            closed.controls[0].values_on(nodes), np.tile([0.0, 0.0, 1.0], (len(nodes), 1)), atol=1e-12
        )

    def test_scaling_doubles_offsets(self, running_chart):
        grid = GridSpec.uniform(running_chart, 9)
        base = AffineSystem(
            chart=running_chart,
            drift=vf(["0", "0", "x1*x2 + x3"], 3),
            controls=(vf(["0", "0", "1 + x1^2"], 3),),
        )
        doubled = AffineSystem(
            chart=running_chart,
            drift=vf(["0", "0", "2*(x1*x2) + x3"], 3),
            controls=base.controls,
        )
        fb1 = synthesize_pipeline(base, grid)
        fb2 = synthesize_pipeline(doubled, grid)
        np.testing.assert_allclose(fb2.alpha_values, 2 * fb1.alpha_values, atol=1e-12)

    def test_alpha_vanishes_on_slice(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        fb = synthesize_pipeline(running_system, grid)
        nodes = grid.nodes()
        on_slice = np.all(nodes[:, :2] == 0.0, axis=1)
        np.testing.assert_allclose(fb.alpha_values[on_slice], 0, atol=1e-13)


class TestApplyFeedback:
    def test_identity_feedback_is_noop(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 5)
        fb = FeedbackPair(
            grid=grid,
            alpha_values=np.zeros((grid.num_nodes, 1)),
            beta_values=np.ones((grid.num_nodes, 1, 1)),
            alpha_exprs=[Const(0.0)],
            beta_exprs=[[Const(1.0)]],
        )
        out = apply_feedback(running_system, fb)
        nodes = grid.nodes()
        np.testing.assert_allclose(
            out.drift.values_on(nodes), running_system.drift.values_on(nodes), atol=1e-14
        )

    def test_span_preserved(self, rng):
        scrambled, _ = make_scrambled_fixture(rng, n=4, k=2, m=2)
        grid = GridSpec.uniform(scrambled.chart, 5)
        fb = synthesize_pipeline(scrambled, grid)
        closed = apply_feedback(scrambled, fb)
        nodes = grid.nodes()
        for q in nodes[:: max(1, len(nodes) // 20)]:
            before = np.stack([g.eval_at(q) for g in scrambled.controls], axis=1)
            after = np.stack([g.eval_at(q) for g in closed.controls], axis=1)
            both = np.concatenate([before, after], axis=1)
            assert np.linalg.matrix_rank(both, tol=1e-8) == np.linalg.matrix_rank(before, tol=1e-8)

    def test_size_mismatch_rejected(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 5)
        fb = FeedbackPair(
            grid=grid,
            alpha_values=np.zeros((grid.num_nodes, 2)),
            beta_values=np.tile(np.eye(2), (grid.num_nodes, 1, 1)),
        )
        with pytest.raises(ValueError):
            apply_feedback(running_system, fb)


class TestEndToEnd:
    def test_running_fixture_soundness(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        assert check_local_invariance(running_system, grid).verdict == "invariant"
        fb = synthesize_pipeline(running_system, grid)
        closed = apply_feedback(running_system, fb)
        report = bracket_residuals(closed, grid, h=1e-4)
        assert report.worst_residual <= 1e-6

    def test_scrambled_fixture_soundness(self, rng):
        scrambled, _ = make_scrambled_fixture(rng, n=4, k=2, m=2)
        grid = GridSpec.uniform(scrambled.chart, 5)
        assert check_local_invariance(scrambled, grid).verdict == "invariant"
        fb = synthesize_pipeline(scrambled, grid)
        closed = apply_feedback(scrambled, fb)
        report = bracket_residuals(closed, grid, h=1e-4)
        assert report.worst_residual <= 1e-6

    def test_feedback_group_roundtrip(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        fb = synthesize_pipeline(running_system, grid)
        closed = apply_feedback(running_system, fb)
        restored = apply_feedback(closed, fb.inverse())
        nodes = grid.nodes()
        np.testing.assert_allclose(
            restored.drift.values_on(nodes),
            running_system.drift.values_on(nodes),
            atol=1e-10,
        )
        for g_restored, g_orig in zip(restored.controls, running_system.controls):
            np.testing.assert_allclose(
                g_restored.values_on(nodes), g_orig.values_on(nodes), atol=1e-10
            )

    def test_axis_order_robustness(self, running_system):
        grid = GridSpec.uniform(running_system.chart, 9)
        fb_fwd = synthesize_pipeline(running_system, grid, axis_order=(2, 1))
        fb_rev = synthesize_pipeline(running_system, grid, axis_order=(1, 2))
        for fb in (fb_fwd, fb_rev):
            closed = apply_feedback(running_system, fb)
            report = bracket_residuals(closed, grid, h=1e-4)
            assert report.worst_residual <= 1e-6
