import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ctrlinv.estimator import FeedbackSynthesizer, validate_system
from ctrlinv.geometry import AffineSystem, ChartSpec, VectorFieldExpr
from ctrlinv.invariance import INVARIANT, NOT_INVARIANT
from ctrlinv.verify import bracket_residuals

from conftest import make_scrambled_fixture


def vf(texts, n):
    return VectorFieldExpr.from_strings(texts, n)


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        est = FeedbackSynthesizer(grid_nodes=5, tol=1e-6)
        params = est.get_params()
        assert params["grid_nodes"] == 5
        assert params["tol"] == 1e-6
        est.set_params(tol=1e-9)
        assert est.tol == 1e-9

    def test_clone(self):
        est = FeedbackSynthesizer(grid_nodes=7, seed=3)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_transform_before_fit_raises(self, running_system):
        with pytest.raises(NotFittedError):
            FeedbackSynthesizer().transform(running_system)

    def test_fit_returns_self(self, running_system):
        est = FeedbackSynthesizer(grid_nodes=5)
        assert est.fit(running_system) is est


class TestValidation:
    def test_rejects_non_system(self):
        with pytest.raises(TypeError):
            validate_system("not a system")

    def test_rejects_rank_zero(self):
        chart = ChartSpec(n=2, k=0, box=((-1, 1), (-1, 1)))
        system = AffineSystem(chart=chart, drift=VectorFieldExpr.zero(2), controls=())
        with pytest.raises(ValueError, match="rank"):
            validate_system(system)


class TestFitSynthesize:
    def test_running_fixture(self, running_system):
        est = FeedbackSynthesizer(grid_nodes=9).fit(running_system)
        assert est.verdict_ == INVARIANT
        assert est.feedback_ is not None
        assert est.feedback_.is_symbolic()
        assert est.verification_.worst_residual <= 1e-6
        assert est.verification_.leaf_deviation <= 1e-5
        nodes = est.grid_.nodes()
        closed = est.transform()
        np.testing.assert_allclose(closed.drift.values_on(nodes)[:, 2], nodes[:, 2], atol=1e-10)

    def test_fit_transform_matches_transform(self, running_system):
        est = FeedbackSynthesizer(grid_nodes=5)
        out = est.fit_transform(running_system)
        assert out is est.transformed_system_

    def test_not_invariant_blocks_transform(self):
        chart = ChartSpec.symmetric(3, 1)
        system = AffineSystem(
            chart=chart, drift=vf(["0", "x1", "0"], 3), controls=(vf(["0", "x3", "1"], 3),)
        )
        est = FeedbackSynthesizer(grid_nodes=5).fit(system)
        assert est.verdict_ == NOT_INVARIANT
        assert est.feedback_ is None
        with pytest.raises(RuntimeError, match="not_invariant"):
            est.transform()

    def test_scrambled_two_controls(self, rng):
        scrambled, _ = make_scrambled_fixture(rng, n=4, k=2, m=2)
        est = FeedbackSynthesizer(grid_nodes=5, sim_step=5e-3, n_leaf_pairs=2).fit(scrambled)
        assert est.verdict_ == INVARIANT
        assert est.verification_.worst_residual <= 1e-6
        assert est.a_field_.base_identity_error <= 1e-12

    def test_advisory_shrink_path(self):
        """A frame change whose condition number grows toward the box edge
        triggers a validity shrink but still synthesizes on the sub-box."""
        chart = ChartSpec.symmetric(4, 2)
        system = AffineSystem(
            chart=chart,
            drift=vf(["0", "0", "x3", "x4"], 4),
            controls=(
                vf(["0", "0", "1", "0"], 4),
                vf(["0", "0", "4*x1^2", "1"], 4),
            ),
        )
        est = FeedbackSynthesizer(grid_nodes=9, cond_limit=5.0).fit(system)
        assert est.verdict_ == INVARIANT
        assert est.advisory_box_ is not None
        lo, hi = est.advisory_box_[0]
        assert -1.0 < lo <= 0.0 <= hi < 1.0
        assert est.feedback_ is not None
        assert est.verification_.worst_residual <= 1e-6

    def test_grid_fallback_for_transcendental_coefficients(self):
        """When the staircase integrals have no closed form, feedback comes
        out as grid values and still shrinks the residual by orders of
        magnitude (limited by the grid quadrature, not by tolerance)."""
        chart = ChartSpec.symmetric(3, 2)
        system = AffineSystem(
            chart=chart,
            drift=vf(["0", "0", "sin(x1) + x3"], 3),
            controls=(vf(["0", "0", "1"], 3),),
        )
        est = FeedbackSynthesizer(grid_nodes=9, sim_step=5e-3, n_leaf_pairs=2).fit(system)
        assert est.verdict_ == INVARIANT
        assert not est.feedback_.is_symbolic()
        before = bracket_residuals(system, est.grid_, h=1e-4).worst_residual
        after = est.verification_.worst_residual
        assert after <= 1e-2
        assert after <= before / 10

    def test_no_controls_parallel_drift(self):
        chart = ChartSpec.symmetric(3, 2)
        system = AffineSystem(chart=chart, drift=vf(["0", "0", "x3"], 3), controls=())
        est = FeedbackSynthesizer(grid_nodes=5).fit(system)
        assert est.verdict_ == INVARIANT
        closed = est.transform()
        nodes = est.grid_.nodes()
        np.testing.assert_allclose(
            closed.drift.values_on(nodes), system.drift.values_on(nodes), atol=1e-14
        )

    def test_transform_other_system_with_same_feedback(self, running_system):
        est = FeedbackSynthesizer(grid_nodes=5).fit(running_system)
        rescaled = AffineSystem(
            chart=running_system.chart,
            drift=running_system.drift,
            controls=running_system.controls,
        )
        out = est.transform(rescaled)
        report = bracket_residuals(out, est.grid_, h=1e-4)
        assert report.worst_residual <= 1e-6

    def test_seeded_verification_reproducible(self, running_system):
        a = FeedbackSynthesizer(grid_nodes=5, seed=42).fit(running_system)
        b = FeedbackSynthesizer(grid_nodes=5, seed=42).fit(running_system)
        assert a.verification_.leaf_deviation == b.verification_.leaf_deviation
