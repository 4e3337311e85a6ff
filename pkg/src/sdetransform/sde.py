"""SDE problems with piecewise drift, the transformed coefficients, and assumption checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import Hypersurface, flatten_points
from .transform import NONPARALLEL_TOL


@dataclass(frozen=True, eq=False)
class SdeProblem:
    """``dX = mu(X) dt + sigma(X) dW`` with ``mu`` smooth on each piece.

    ``pieces[k]`` is the drift on the region ``surface.piece_index(x) == k``;
    each piece must be defined on a neighbourhood of its closed region so that
    it can be evaluated on the surface itself.  Pieces and ``diffusion_fn``
    act on ``(n, d)`` batches; the diffusion returns ``(n, d, m)``.

    ``post_step``, if set, is applied to the state after every Euler step.
    """

    surface: Hypersurface
    pieces: Sequence[Callable]
    diffusion_fn: Callable
    noise_dim: int
    x0: np.ndarray
    T: float = 1.0
    post_step: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if len(self.pieces) != self.surface.piece_count:
            raise ValueError(
                f"surface has {self.surface.piece_count} pieces, got {len(self.pieces)} drifts"
            )
        if self.x0.shape[0] != self.dimension:
            raise ValueError("initial state has the wrong dimension")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def dimension(self):
        return self.surface.dimension

    def evaluate_pieces(self, x, index):
        out = np.empty_like(x)
        for k, f in enumerate(self.pieces):
            rows = index == k
            if rows.any():
                out[rows] = f(x[rows])
        return out

    def drift(self, x):
        pts, lead = flatten_points(x, self.dimension)
        out = self.evaluate_pieces(pts, self.surface._piece_index(pts))
        return out.reshape(lead + (self.dimension,))

    def diffusion(self, x):
        pts, lead = flatten_points(x, self.dimension)
        out = np.asarray(self.diffusion_fn(pts), dtype=float)
        return out.reshape(lead + (self.dimension, self.noise_dim))

    def side(self, x):
        """``+1`` on the plus side of the canonical normal (surface included), else ``-1``."""
        pts, lead = flatten_points(x, self.dimension)
        return np.where(self.surface._offset(pts) >= 0.0, 1, -1).reshape(lead)

    def with_surface(self, surface):
        return SdeProblem(surface, self.pieces, self.diffusion_fn, self.noise_dim,
                          self.x0, self.T, self.post_step, self.name)


class TransformedSde:
    """Coefficients of the SDE satisfied by ``Z = G(X)``.

    ``mu~_k(z) = G_k'(x) mu(x) + 1/2 tr(sigma(x)^T G_k''(x) sigma(x))`` and
    ``sigma~(z) = G'(x) sigma(x)`` with ``x = G^{-1}(z)``.  Outside the tube
    the original coefficients are returned unchanged.
    """

    def __init__(self, transform):
        self.transform = transform
        self.problem = transform.problem

    def at_preimage(self, x, with_jacobian=False):
        """Transformed drift and diffusion given the preimage batch ``x``.

        With ``with_jacobian`` the Jacobian ``G'(x)`` is returned as well.
        """
        mu = self.problem.drift(x)
        sig = self.problem.diffusion(x)
        J, H, tube = self.transform.derivatives(x)
        mu_t = mu.copy()
        sig_t = sig.copy()
        if tube.any():
            Jt, Ht, st = J[tube], H[tube], sig[tube]
            trace = np.einsum("nam,nkab,nbm->nk", st, Ht, st)
            mu_t[tube] = np.einsum("nkj,nj->nk", Jt, mu[tube]) + 0.5 * trace
            sig_t[tube] = Jt @ st
        if with_jacobian:
            return mu_t, sig_t, J
        return mu_t, sig_t

    def coefficients(self, z, guess=None):
        """Preimage, drift and diffusion at a ``(n, d)`` batch of ``z``."""
        x = self.transform.inverse(z, guess)
        mu_t, sig_t = self.at_preimage(x)
        return x, mu_t, sig_t

    def drift(self, z):
        pts, lead = flatten_points(z, self.problem.dimension)
        return self.coefficients(pts)[1].reshape(lead + (self.problem.dimension,))

    def diffusion(self, z):
        pts, lead = flatten_points(z, self.problem.dimension)
        d, m = self.problem.dimension, self.problem.noise_dim
        return self.coefficients(pts)[2].reshape(lead + (d, m))


# ---------------------------------------------------------------------------
# assumption checks

@dataclass
class NonParallelityReport:
    minimum: float
    threshold: float
    passed: bool


def check_non_parallelity(problem, samples=256, c0=NONPARALLEL_TOL, rng=None):
    """Minimum of ``|sigma(xi)^T n(xi)|`` over sampled surface points."""
    xi = problem.surface.sample(samples, rng)
    n = problem.surface._canonical_normal(xi)
    st_n = np.einsum("nij,ni->nj", problem.diffusion(xi), n)
    value = float(np.linalg.norm(st_n, axis=1).min())
    return NonParallelityReport(value, c0, value >= c0)


def sampling_box(problem, samples=256, margin=1.0, rng=None):
    xi = problem.surface.sample(samples, rng)
    return xi.min(axis=0) - margin, xi.max(axis=0) + margin


@dataclass
class PiecewiseLipschitzReport:
    estimates: list
    max_estimate: float


def check_drift_piecewise_lipschitz(problem, samples=4096, box=None, rng=None):
    """Per-piece Lipschitz estimates from same-piece pairs of random points.

    Advisory only: a large value signals a drift that is not Lipschitz away
    from the surface, but never blocks a simulation.
    """
    rng = np.random.default_rng(5) if rng is None else rng
    lo, hi = sampling_box(problem, rng=rng) if box is None else box
    x = rng.uniform(lo, hi, (samples, problem.dimension))
    y = x + rng.uniform(-0.05, 0.05, x.shape) * (np.asarray(hi) - np.asarray(lo))
    px, py = problem.surface._piece_index(x), problem.surface._piece_index(y)
    estimates = []
    for k, f in enumerate(problem.pieces):
        rows = (px == k) & (py == k)
        if not rows.any():
            estimates.append(float("nan"))
            continue
        dist = np.linalg.norm(x[rows] - y[rows], axis=1)
        ok = dist > 0
        diff = np.linalg.norm(f(x[rows][ok]) - f(y[rows][ok]), axis=1)
        estimates.append(float(np.max(diff / dist[ok])) if ok.any() else 0.0)
    finite = [e for e in estimates if np.isfinite(e)]
    return PiecewiseLipschitzReport(estimates, max(finite) if finite else float("nan"))


def lipschitz_estimate(fn, lo, hi, pairs=10_000, rng=None, scale=None):
    """Sampled Lipschitz constant of ``fn`` over random pairs in a box."""
    rng = np.random.default_rng(11) if rng is None else rng
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    x = rng.uniform(lo, hi, (pairs, lo.shape[0]))
    if scale is None:
        y = rng.uniform(lo, hi, x.shape)
    else:
        y = x + rng.uniform(-scale, scale, x.shape)
    fx = np.asarray(fn(x)).reshape(pairs, -1)
    fy = np.asarray(fn(y)).reshape(pairs, -1)
    dist = np.linalg.norm(x - y, axis=1)
    ok = dist > 0
    return float(np.max(np.linalg.norm(fx - fy, axis=1)[ok] / dist[ok]))


@dataclass
class BoundednessReport:
    max_drift: float
    max_diffusion: float


def check_coefficient_bounds(problem, width=1.0, samples=2048, rng=None):
    """Largest drift and diffusion norms on a tube of the given width (advisory)."""
    rng = np.random.default_rng(13) if rng is None else rng
    xi = problem.surface.sample(samples, rng)
    n = problem.surface._canonical_normal(xi)
    x = xi + rng.uniform(-width, width, xi.shape[0])[:, None] * n
    mu = problem.drift(x)
    sig = problem.diffusion(x)
    return BoundednessReport(
        float(np.linalg.norm(mu, axis=1).max()),
        float(np.linalg.norm(sig, axis=(1, 2)).max()),
    )


@dataclass
class ContinuityReport:
    offsets: tuple
    gaps: np.ndarray
    raw_gaps: np.ndarray
    ratios: np.ndarray
    passed: bool
    ratio_band: tuple = (5.0, 20.0)
    points: np.ndarray = field(default=None, repr=False)


def continuity_probe(transformed, samples=32, offsets=(1e-2, 1e-3, 1e-4), ratio_band=(5.0, 20.0), rng=None):
    """Two-sided gaps of the transformed and the raw drift across the surface.

    For surface points ``xi`` and offsets ``h``, compares
    ``mu~(G(xi + h n))`` with ``mu~(G(xi - h n))``.  The transformed gap
    should shrink like ``h``; the raw gap tends to the jump size.
    """
    rng = np.random.default_rng(17) if rng is None else rng
    problem = transformed.problem
    G = transformed.transform
    xi = problem.surface.sample(samples, rng)
    n = problem.surface.orientation * problem.surface._canonical_normal(xi)
    gaps, raw = [], []
    for h in offsets:
        xp, xm = xi + h * n, xi - h * n
        gaps.append(np.linalg.norm(transformed.drift(G.value(xp)) - transformed.drift(G.value(xm)), axis=1))
        raw.append(np.linalg.norm(problem.drift(xp) - problem.drift(xm), axis=1))
    gaps = np.stack(gaps, axis=1)
    raw = np.stack(raw, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gaps[:, :-1] / gaps[:, 1:]
    lo, hi = ratio_band
    passed = bool(np.all((ratios >= lo) & (ratios <= hi)))
    return ContinuityReport(tuple(offsets), gaps, raw, ratios, passed, ratio_band, xi)
