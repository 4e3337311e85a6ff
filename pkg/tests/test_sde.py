import dataclasses

import numpy as np
import pytest

from conftest import tube_points
from sdetransform.examples import build_1d_jump
from sdetransform.geometry import PointSet1D
from sdetransform.sde import (
    SdeProblem,
    TransformedSde,
    check_coefficient_bounds,
    check_drift_piecewise_lipschitz,
    check_non_parallelity,
    continuity_probe,
    lipschitz_estimate,
)


def test_drift_branches(circle):
    prob = circle.problem
    assert np.allclose(prob.drift([2.0, 0.0]), [-2.0, 0.0])
    assert np.allclose(prob.drift([0.5, 0.3]), [0.5, 0.0])
    # points on the circle belong to the outer piece
    assert np.allclose(prob.drift([1.0, 0.0]), [-1.0, 0.0])


def test_problem_validates_piece_count():
    with pytest.raises(ValueError):
        SdeProblem(PointSet1D((0.0,)), (lambda x: x,), lambda x: np.ones((x.shape[0], 1, 1)), 1, [0.0])


def test_identity_region_bitwise(circle_transform):
    tsde = TransformedSde(circle_transform)
    z = np.array([[0.1, 0.2], [2.0, 1.0], [-1.6, 0.0]])
    prob = circle_transform.problem
    assert np.array_equal(tsde.drift(z), prob.drift(z))
    assert np.array_equal(tsde.diffusion(z), prob.diffusion(z))


def test_transformed_diffusion_is_jacobian_for_identity_noise(circle_transform):
    x = tube_points(circle_transform.surface, 0.5, 50, np.random.default_rng(0))
    z = circle_transform.value(x)
    tsde = TransformedSde(circle_transform)
    assert np.allclose(tsde.diffusion(z), circle_transform.jacobian(x), atol=1e-10)


def test_1d_transformed_drift_continuous(jump1d_transform):
    tsde = TransformedSde(jump1d_transform)
    mu = tsde.drift(np.array([[1e-8], [-1e-8]]))
    assert abs(mu[0, 0] - mu[1, 0]) < 1e-6


def test_circle_gap_bounded_by_ten_h(circle_transform):
    tsde = TransformedSde(circle_transform)
    G = circle_transform
    xi, n = np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])
    for h in (1e-2, 1e-3, 1e-4):
        gap = np.linalg.norm(tsde.drift(G.value(xi + h * n)) - tsde.drift(G.value(xi - h * n)))
        raw = np.linalg.norm(G.problem.drift(xi + h * n) - G.problem.drift(xi - h * n))
        assert gap <= 10 * h
        assert raw == pytest.approx(2.0, abs=3 * h)


def test_non_parallelity(circle, dividend):
    rep = check_non_parallelity(circle.problem)
    assert rep.minimum == pytest.approx(1.0) and rep.passed
    mutant = dataclasses.replace(circle.problem, diffusion_fn=lambda x: np.zeros((x.shape[0], 2, 2)))
    assert not check_non_parallelity(mutant).passed
    assert check_non_parallelity(dividend.problem).passed


def test_piecewise_lipschitz(circle):
    rep = check_drift_piecewise_lipschitz(circle.problem)
    assert rep.estimates == pytest.approx([1.0, 1.0], rel=1e-3)
    assert max(rep.estimates) <= 1.0 + 1e-12
    heaviside = build_1d_jump()
    assert check_drift_piecewise_lipschitz(heaviside.problem).estimates == [0.0, 0.0]


def test_lipschitz_estimate_of_transformed_diffusion_is_stable(circle_transform):
    tsde = TransformedSde(circle_transform)
    lo, hi = (-1.6, -1.6), (1.6, 1.6)
    small = lipschitz_estimate(lambda z: tsde.diffusion(z).reshape(z.shape[0], -1), lo, hi, pairs=5000, scale=0.05)
    large = lipschitz_estimate(lambda z: tsde.diffusion(z).reshape(z.shape[0], -1), lo, hi, pairs=10000,
                               scale=0.05, rng=np.random.default_rng(99))
    assert np.isfinite(small) and abs(large - small) <= 0.2 * small


def test_coefficient_bounds(circle):
    rep = check_coefficient_bounds(circle.problem)
    assert rep.max_drift <= 2.0 + 1e-12
    assert rep.max_diffusion == pytest.approx(np.sqrt(2.0))


def test_continuity_probe_circle(circle_transform):
    rep = continuity_probe(TransformedSde(circle_transform))
    assert rep.passed
    assert rep.gaps.shape == (32, 3)
