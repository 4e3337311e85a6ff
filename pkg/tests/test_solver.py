import numpy as np
import pytest
from scipy import stats

from oracles import euler_ou_mean
from sdetransform.errors import NonFiniteState, SimulationFailureBudgetExceeded
from sdetransform.geometry import PointSet1D
from sdetransform.sde import SdeProblem
from sdetransform.solver import BrownianLadder, em_step, run_monte_carlo, simulate, uniforms


def ou_problem(theta=1.0, sigma=0.5, x0=1.0):
    pieces = (lambda x: -theta * x, lambda x: -theta * x)
    return SdeProblem(PointSet1D((10.0,)), pieces, lambda x: np.full((x.shape[0], 1, 1), sigma), 1, [x0])


class TestStream:
    def test_blocks_are_consistent(self):
        whole = uniforms(3, 7, 0, 40)
        for start in (0, 1, 5, 13):
            assert np.array_equal(uniforms(3, 7, start, 40 - start), whole[start:])

    def test_open_interval(self):
        u = uniforms(0, 0, 0, 10000)
        assert u.min() > 0 and u.max() < 1

    def test_paths_differ(self):
        assert not np.array_equal(uniforms(0, 0, 0, 8), uniforms(0, 1, 0, 8))
        assert not np.array_equal(uniforms(0, 0, 0, 8), uniforms(1, 0, 0, 8))


class TestLadder:
    def test_coarse_is_sum_of_fine(self):
        lad = BrownianLadder(1.0, 8, 2, 0, np.arange(3))
        fine = lad.increments(8, 0, 256)
        coarse = lad.increments(5, 0, 32)
        assert np.allclose(coarse, fine.reshape(3, 32, 8, 2).sum(axis=2), atol=1e-14)

    def test_windowed_matches_direct(self):
        small = BrownianLadder(1.0, 10, 1, 4, np.arange(2), window_floats=16)
        big = BrownianLadder(1.0, 10, 1, 4, np.arange(2))
        for level in (10, 6, 2):
            got = np.concatenate([small.increments(level, a, b) for a, b in small.windows(level)], axis=1)
            assert np.allclose(got, big.increments(level, 0, 1 << level), atol=1e-13)

    def test_independent_of_batch_membership(self):
        a = BrownianLadder(1.0, 6, 2, 9, np.array([0, 1, 2, 3]))
        b = BrownianLadder(1.0, 6, 2, 9, np.array([2]))
        assert np.array_equal(a.increments(6, 0, 64)[2], b.increments(6, 0, 64)[0])

    def test_increments_are_gaussian(self):
        lad = BrownianLadder(1.0, 12, 1, 0, np.arange(4))
        dw = lad.increments(12, 0, 4096).ravel() / np.sqrt(lad.dt(12))
        assert stats.kstest(dw, "norm").pvalue > 1e-3


def test_em_step_single_and_batch():
    x = em_step(np.array([1.0, 2.0]), np.array([1.0, 0.0]), np.eye(2), 0.5, np.array([0.1, -0.1]))
    assert np.allclose(x, [1.6, 1.9])
    with pytest.raises(NonFiniteState):
        em_step(np.array([1.0]), np.array([np.inf]), np.eye(1), 0.1, np.zeros(1))


def test_ou_mean_matches_euler_recursion():
    prob = ou_problem()
    res = run_monte_carlo(prob, "EM", [6], 4000, 1)
    got = res.levels[6][:, 0]
    expected = euler_ou_mean(1.0, 1.0, 1.0, 64)
    assert abs(got.mean() - expected) < 4 * got.std() / np.sqrt(got.size)


def test_worker_count_does_not_change_results(circle, circle_transform):
    a = run_monte_carlo(circle.problem, "GM", [3, 4], 40, 5, circle_transform, workers=1, batch_size=16)
    b = run_monte_carlo(circle.problem, "GM", [3, 4], 40, 5, circle_transform, workers=3, batch_size=16)
    for k in (3, 4):
        assert np.array_equal(a.levels[k], b.levels[k])


def test_deterministic(circle, circle_transform):
    lad = BrownianLadder(1.0, 7, 2, 11, np.arange(4))
    a = simulate(circle.problem, "GM", 7, lad, circle_transform).terminal
    b = simulate(circle.problem, "GM", 7, lad, circle_transform).terminal
    assert np.array_equal(a, b)


def test_gm_equals_em_without_jump(nojump):
    G = nojump.transform()
    lad = BrownianLadder(1.0, 8, 2, 3, np.arange(10))
    gm = simulate(nojump.problem, "GM", 8, lad, G, store_trajectory=True)
    em = simulate(nojump.problem, "EM", 8, lad, store_trajectory=True)
    assert np.array_equal(gm.trajectory, em.trajectory)


def test_trajectory_shape(circle, circle_transform):
    lad = BrownianLadder(1.0, 4, 2, 0, np.arange(2))
    res = simulate(circle.problem, "GM", 4, lad, circle_transform, store_trajectory=True)
    assert res.trajectory.shape == (2, 17, 2)
    assert np.array_equal(res.trajectory[:, -1], res.terminal)
    assert np.allclose(res.times, np.linspace(0, 1, 17))


@pytest.mark.filterwarnings("ignore:overflow")
def test_failure_budget():
    blowup = SdeProblem(
        PointSet1D((0.0,)),
        (lambda x: x**3, lambda x: x**3),
        lambda x: np.full((x.shape[0], 1, 1), 5.0),
        1,
        [1.0],
    )
    with pytest.raises(SimulationFailureBudgetExceeded):
        run_monte_carlo(blowup, "EM", [6], 50, 0)
