import numpy as np
import pytest

from ctrlinv import AffineSystem, ChartSpec, VectorFieldExpr
from ctrlinv import expr as ex


def make_random_expr(rng, n, depth=3):
    """Random expression over a domain-safe grammar (no poles, no log of <= 0)."""
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.4:
            return ex.const(int(rng.integers(-8, 9)) / 4.0)
        return ex.Var(int(rng.integers(1, n + 1)))
    choice = int(rng.integers(0, 8))
    a = make_random_expr(rng, n, depth - 1)
    b = make_random_expr(rng, n, depth - 1)
    if choice == 0:
        return ex.add(a, b)
    if choice == 1:
        return ex.sub(a, b)
    if choice == 2:
        return ex.mul(a, b)
    if choice == 3:
        return ex.div(a, ex.add(ex.const(2.0), ex.power(b, 2)))
    if choice == 4:
        return ex.power(a, int(rng.integers(2, 4)))
    if choice == 5:
        return ex.unary("sin", a)
    if choice == 6:
        return ex.unary("cos", a)
    return ex.unary("exp", ex.mul(ex.const(0.25), a))


def make_poly(rng, variables, degree=3, terms=4):
    """Random polynomial in the given variables, dyadic coefficients
    (products and cancellations stay exact in binary floats)."""
    variables = list(variables)
    out = ex.ZERO
    for _ in range(terms):
        mono = ex.const(int(rng.integers(-8, 9)) / 4.0)
        for _ in range(int(rng.integers(0, degree + 1))):
            mono = ex.mul(mono, ex.Var(int(rng.choice(variables))))
        out = ex.add(out, mono)
    return out


def make_random_polynomial(rng, n, degree=3, terms=4):
    return make_poly(rng, range(1, n + 1), degree=degree, terms=terms)


def make_scrambled_fixture(rng, n=4, k=2, m=2):
    """A system obtained by feeding random polynomial feedback into a
    distribution-preserving one.  Returns (scrambled, parallel) systems.

    The parallel controls are transversal coordinate directions scaled by
    transversal-only factors, so their zero-slice sections stay pointwise
    independent; the scrambling gain is a product of unit-triangular
    polynomial matrices, hence invertible everywhere with determinant one.
    """
    assert m <= n - k
    chart = ChartSpec.symmetric(n, k)
    ghat = []
    for i in range(m):
        coef = ex.add(
            ex.ONE,
            ex.mul(ex.const(int(rng.integers(0, 3)) / 4.0), ex.power(ex.Var(k + i + 1), 2)),
        )
        comps = [ex.ZERO] * n
        comps[k + i] = coef
        ghat.append(VectorFieldExpr(tuple(comps)))
    # the 1/8 damping keeps unit-horizon flows from the box interior inside
    # the box, so simulation-based checks see the whole horizon
    damp = ex.const(1.0 / 8.0)
    fhat_comps = [
        ex.mul(damp, make_poly(rng, range(1, n + 1), degree=2, terms=2)) for _ in range(k)
    ]
    fhat_comps += [
        ex.mul(damp, make_poly(rng, range(k + 1, n + 1), degree=2, terms=3))
        for _ in range(n - k)
    ]
    fhat = VectorFieldExpr(tuple(fhat_comps))
    parallel = AffineSystem(chart=chart, drift=fhat, controls=tuple(ghat))

    alpha0 = [
        ex.mul(damp, make_poly(rng, range(1, n + 1), degree=3, terms=3)) for _ in range(m)
    ]
    lower = [[ex.ONE if i == j else ex.ZERO for j in range(m)] for i in range(m)]
    upper = [[ex.ONE if i == j else ex.ZERO for j in range(m)] for i in range(m)]
    for i in range(m):
        for j in range(m):
            if i > j:
                lower[i][j] = make_poly(rng, range(1, n + 1), degree=2, terms=2)
            elif i < j:
                upper[i][j] = make_poly(rng, range(1, n + 1), degree=2, terms=2)
    beta0 = [
        [
            _expr_dot([lower[i][t] for t in range(m)], [upper[t][j] for t in range(m)])
            for j in range(m)
        ]
        for i in range(m)
    ]

    drift_comps = list(fhat.components)
    for i in range(m):
        drift_comps = [
            ex.add(c, ex.mul(alpha0[i], gc)) for c, gc in zip(drift_comps, ghat[i].components)
        ]
    controls = []
    for i in range(m):
        comps = [ex.ZERO] * n
        for j in range(m):
            comps = [ex.add(c, ex.mul(beta0[i][j], gc)) for c, gc in zip(comps, ghat[j].components)]
        controls.append(VectorFieldExpr(tuple(comps)))
    scrambled = AffineSystem(
        chart=chart, drift=VectorFieldExpr(tuple(drift_comps)), controls=tuple(controls)
    )
    return scrambled, parallel


def _expr_dot(a, b):
    out = ex.ZERO
    for x, y in zip(a, b):
        out = ex.add(out, ex.mul(x, y))
    return out


def points_in_box(rng, box, count):
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((count, len(box)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def running_chart():
    return ChartSpec.symmetric(n=3, k=2)


@pytest.fixture
def running_system(running_chart):
    """Drift x1*x2 d3 + x3 d3 with one control (1 + x1^2) d3; k = 2."""
    drift = VectorFieldExpr.from_strings(["0", "0", "x1*x2 + x3"], 3)
    g1 = VectorFieldExpr.from_strings(["0", "0", "1 + x1^2"], 3)
    return AffineSystem(chart=running_chart, drift=drift, controls=(g1,))


@pytest.fixture
def parallel_system(running_chart):
    """Already-invariant variant: drift x3 d3, control d3."""
    drift = VectorFieldExpr.from_strings(["0", "0", "x3"], 3)
    g1 = VectorFieldExpr.from_strings(["0", "0", "1"], 3)
    return AffineSystem(chart=running_chart, drift=drift, controls=(g1,))
