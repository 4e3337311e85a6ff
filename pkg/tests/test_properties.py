"""Property-based checks of the invariants."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sdetransform.convergence import fit_order
from sdetransform.examples import build_1d_jump, build_unit_circle
from sdetransform.solver import BrownianLadder, uniforms
from sdetransform.transform import bump, phibar, phibar_d1

CIRCLE = build_unit_circle()
G_CIRCLE = CIRCLE.transform()

coords = st.floats(-2.5, 2.5, allow_nan=False)
points = st.tuples(coords, coords).map(np.array)
fixture_ok = settings(suppress_health_check=[HealthCheck.too_slow], deadline=None, max_examples=60)


@given(st.floats(-50, 50))
def test_bump_support_and_range(u):
    v = float(bump(u))
    assert 0.0 <= v <= 1.0
    if abs(u) >= 1:
        assert v == 0.0


@given(st.floats(-3, 3), st.floats(0.01, 2))
def test_phibar_odd(y, c):
    assert phibar(-y, c) == -phibar(y, c)
    assert phibar_d1(-y, c) == phibar_d1(y, c)


@fixture_ok
@given(points)
def test_round_trip(x):
    z = G_CIRCLE.value(x)
    assert np.allclose(G_CIRCLE.inverse(z), x, rtol=1e-10, atol=1e-10)
    assert np.allclose(G_CIRCLE.value(G_CIRCLE.inverse(x)), x, rtol=1e-10, atol=1e-10)


@fixture_ok
@given(points)
def test_identity_off_tube_and_positive_det(x):
    rho = np.hypot(*x)
    J = G_CIRCLE.jacobian(x)
    if abs(rho - 1.0) >= G_CIRCLE.c:
        assert np.array_equal(G_CIRCLE.value(x), x)
        assert np.array_equal(J, np.eye(2))
    assert np.linalg.det(J) > 0


@fixture_ok
@given(st.floats(-3, 3).filter(lambda a: abs(a) > 1e-3), st.floats(0.05, 0.99))
def test_1d_monotone_within_bound(alpha, fraction):
    b = build_1d_jump(mu_left_fn=alpha, mu_right_fn=-alpha)
    c = fraction / (6 * abs(alpha))
    G = b.transform(c=c)
    x = np.linspace(-1.5 * c, 1.5 * c, 401)[:, None]
    assert np.all(np.diff(G.value(x)[:, 0]) > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 1000), st.integers(0, 200), st.integers(1, 50))
def test_stream_blocks(seed, path, start, count):
    whole = uniforms(seed, path, 0, start + count)
    assert np.array_equal(uniforms(seed, path, start, count), whole[start:])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 7), st.integers(0, 7))
def test_ladder_coupling(seed, fine, coarse):
    coarse = min(coarse, fine)
    lad = BrownianLadder(2.0, fine, 2, seed, np.arange(2))
    f = lad.increments(fine, 0, 1 << fine)
    c = lad.increments(coarse, 0, 1 << coarse)
    assert np.allclose(c, f.reshape(2, 1 << coarse, -1, 2).sum(axis=2), atol=1e-13)


@given(st.floats(-5, 5), st.floats(-3, 3), st.integers(3, 15))
def test_fit_exact_on_lines(intercept, slope, n):
    x = -np.arange(1, n + 1, dtype=float)
    fit = fit_order(x, intercept + slope * x)
    assert abs(fit.slope - slope) < 1e-9
    shifted = fit_order(x, intercept + 7.25 + slope * x)
    assert abs(shifted.slope - fit.slope) < 1e-12
