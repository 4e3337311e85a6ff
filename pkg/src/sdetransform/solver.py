"""Euler-Maruyama stepping, the transformed scheme, and coupled Brownian ladders."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import NonFiniteState, SimulationFailureBudgetExceeded
from .sde import TransformedSde

log = logging.getLogger(__name__)

FAILURE_BUDGET = 1e-3
# fine increments held in memory per batch and window (float64 count)
WINDOW_FLOATS = 1 << 22


@dataclass(frozen=True)
class SimulationConfig:
    x0: tuple
    T: float = 1.0
    levels: tuple = tuple(range(1, 11))
    paths: int = 1024
    seed: int = 0


# ---------------------------------------------------------------------------
# Brownian increments

def uniforms(seed, path, start, count):
    """Uniforms ``(0, 1)`` number ``start .. start+count`` of the stream for one path.

    Philox is counter based, so any block of the stream is computed directly
    from ``(seed, path, start)`` without generating what precedes it.
    """
    block, lane = divmod(start, 4)
    gen = np.random.Philox(key=np.array([path, seed], dtype=np.uint64), counter=block)
    raw = gen.random_raw(count + lane)[lane:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _pairwise(x, times):
    for _ in range(times):
        x = x[:, 0::2] + x[:, 1::2]
    return x


@dataclass(frozen=True)
class BrownianLadder:
    """Coupled Brownian increments for a batch of paths on a dyadic grid.

    Level ``k`` has ``2**k`` steps of size ``T 2**-k``.  Increments on the
    finest level are Gaussian draws from the per-path counter stream; every
    coarser level is obtained by summing adjacent pairs of the next finer
    level, so the coupling between levels is exact.
    """

    T: float
    finest_level: int
    noise_dim: int
    seed: int
    path_indices: np.ndarray
    window_floats: int = WINDOW_FLOATS
    _cap: int = field(init=False, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.path_indices, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "path_indices", idx)
        per_step = max(1, idx.size * self.noise_dim)
        cap = 1 << max(0, int(np.floor(np.log2(max(1, self.window_floats // per_step)))))
        object.__setattr__(self, "_cap", cap)

    @property
    def paths(self):
        return self.path_indices.size

    def steps(self, level):
        return 1 << level

    def dt(self, level):
        return self.T / (1 << level)

    def fine(self, start, stop):
        """Finest-level increments for fine steps ``start .. stop``: ``(P, n, m)``."""
        m = self.noise_dim
        count = (stop - start) * m
        out = np.empty((self.paths, count))
        for row, path in enumerate(self.path_indices):
            out[row] = uniforms(self.seed, int(path), start * m, count)
        scale = np.sqrt(self.dt(self.finest_level))
        return (ndtri(out) * scale).reshape(self.paths, stop - start, m)

    def increments(self, level, start, stop):
        """Level ``level`` increments for steps ``start .. stop``: ``(P, n, m)``."""
        if level > self.finest_level:
            raise ValueError(f"level {level} is finer than the ladder ({self.finest_level})")
        shift = self.finest_level - level
        if shift == 0:
            return self.fine(start, stop)
        if (1 << shift) <= self._cap:
            return _pairwise(self.fine(start << shift, stop << shift), shift)
        out = np.empty((self.paths, stop - start, self.noise_dim))
        for j in range(start, stop):
            pair = self.increments(level + 1, 2 * j, 2 * j + 2)
            out[:, j - start] = pair[:, 0] + pair[:, 1]
        return out

    def windows(self, level):
        """Step ranges at ``level`` whose increments fit the memory window."""
        n = self.steps(level)
        shift = self.finest_level - level
        width = max(1, self._cap >> shift)
        for start in range(0, n, width):
            yield start, min(n, start + width)


# ---------------------------------------------------------------------------
# stepping

def em_step(state, drift_val, diffusion_val, dt, dW):
    """One Euler-Maruyama step; works on a single state or a batch."""
    if not dt > 0:
        raise ValueError("step size must be positive")
    out = _em_update(np.asarray(state, dtype=float), np.asarray(drift_val, dtype=float),
                     np.asarray(diffusion_val, dtype=float), dt, np.asarray(dW, dtype=float))
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("Euler step produced a non-finite state")
    return out


def _em_update(state, drift_val, diffusion_val, dt, dW):
    return state + drift_val * dt + np.einsum("...ij,...j->...i", diffusion_val, dW)


@dataclass
class PathResult:
    """Terminal states (and optionally trajectories) for a batch of paths."""

    terminal: np.ndarray
    level: int
    path_indices: np.ndarray
    method: str
    failed: np.ndarray
    times: Optional[np.ndarray] = None
    trajectory: Optional[np.ndarray] = None


def _finish_step(new, old, failed, post_step):
    if post_step is not None:
        new = post_step(new)
    bad = ~np.all(np.isfinite(new), axis=1)
    if bad.any():
        failed |= bad
        new[bad] = old[bad]
    return new


def simulate_em(problem, level, ladder, store_trajectory=False):
    """Plain Euler-Maruyama on the original coefficients."""
    P, d = ladder.paths, problem.dimension
    dt = ladder.dt(level)
    x = np.broadcast_to(problem.x0, (P, d)).copy()
    failed = np.zeros(P, dtype=bool)
    traj = [x.copy()] if store_trajectory else None
    for start, stop in ladder.windows(level):
        dW = ladder.increments(level, start, stop)
        for i in range(stop - start):
            new = _em_update(x, problem.drift(x), problem.diffusion(x), dt, dW[:, i])
            x = _finish_step(new, x, failed, problem.post_step)
            if store_trajectory:
                traj.append(x.copy())
    return _result(x, level, ladder, "EM", failed, traj)


def simulate_gm(problem, transform, level, ladder, store_trajectory=False):
    """Transform, step the Lipschitz SDE for ``Z = G(X)``, map back.

    With ``store_trajectory`` every stored state is mapped back by the inverse
    transform; the preimage of each step is needed for the coefficients anyway.
    """
    P, d = ladder.paths, problem.dimension
    dt = ladder.dt(level)
    tsde = TransformedSde(transform)
    x = np.broadcast_to(problem.x0, (P, d)).copy()
    z = transform.value(x)
    failed = np.zeros(P, dtype=bool)
    traj = [x.copy()] if store_trajectory else None
    guess = x
    for start, stop in ladder.windows(level):
        dW = ladder.increments(level, start, stop)
        for i in range(stop - start):
            x = transform.inverse(z, guess=guess)
            if store_trajectory and (start + i) > 0:
                traj.append(x.copy())
            mu_t, sig_t, J = tsde.at_preimage(x, with_jacobian=True)
            new = _em_update(z, mu_t, sig_t, dt, dW[:, i])
            z_new = _finish_step(new, z, failed, problem.post_step)
            # one Newton step from the current preimage predicts the next one
            guess = x + np.linalg.solve(J, (z_new - z)[:, :, None])[:, :, 0]
            z = z_new
    x = transform.inverse(z, guess=guess)
    if store_trajectory:
        traj.append(x.copy())
    return _result(x, level, ladder, "GM", failed, traj)


def _result(x, level, ladder, method, failed, traj):
    times = None
    trajectory = None
    if traj is not None:
        trajectory = np.stack(traj, axis=1)
        times = np.linspace(0.0, ladder.T, ladder.steps(level) + 1)
    return PathResult(x, level, ladder.path_indices.copy(), method, failed, times, trajectory)


def simulate(problem, method, level, ladder, transform=None, store_trajectory=False):
    method = method.upper()
    if method == "EM":
        return simulate_em(problem, level, ladder, store_trajectory)
    if method == "GM":
        if transform is None:
            raise ValueError("GM needs a transform")
        return simulate_gm(problem, transform, level, ladder, store_trajectory)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Monte Carlo driver

@dataclass
class MonteCarloResult:
    method: str
    levels: dict
    path_indices: np.ndarray
    failed_paths: np.ndarray
    seed: int


def run_monte_carlo(problem, method, levels, paths, seed, transform=None, workers=1,
                    batch_size=256, finest_level=None):
    """Terminal states at every requested level on one coupled ladder per path.

    Paths are processed in fixed batches (independent of ``workers``), so the
    output is bitwise identical for any worker count.  Paths that produced a
    non-finite state at any level are dropped from every level; more than
    0.1% of such paths fails the run.
    """
    levels = sorted(set(int(k) for k in levels))
    if not levels or levels[0] < 0:
        raise ValueError("levels must be nonnegative")
    K = levels[-1] if finest_level is None else int(finest_level)
    if K < levels[-1]:
        raise ValueError("finest level below requested levels")
    batches = [np.arange(s, min(paths, s + batch_size)) for s in range(0, paths, batch_size)]

    def run_batch(idx):
        ladder = BrownianLadder(problem.T, K, problem.noise_dim, seed, idx)
        out, failed = {}, np.zeros(idx.size, dtype=bool)
        for k in levels:
            res = simulate(problem, method, k, ladder, transform)
            out[k] = res.terminal
            failed |= res.failed
        return out, failed

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, batches))
    else:
        results = [run_batch(b) for b in batches]

    failed = np.concatenate([f for _, f in results])
    n_failed = int(failed.sum())
    if n_failed > FAILURE_BUDGET * paths:
        raise SimulationFailureBudgetExceeded(n_failed, paths)
    if n_failed:
        log.warning("%d of %d paths failed and were excluded", n_failed, paths)
    keep = ~failed
    by_level = {k: np.concatenate([r[k] for r, _ in results])[keep] for k in levels}
    all_idx = np.arange(paths)
    return MonteCarloResult(method.upper(), by_level, all_idx[keep], all_idx[failed], seed)
