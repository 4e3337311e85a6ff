"""Exceptional hypersurfaces and the closest-point queries the transform needs.

Every descriptor works on batches: points are arrays of shape ``(..., d)`` and
the leading shape is preserved in the result.  A descriptor has a canonical
normal orientation; ``orientation=-1`` flips the normal without changing the
geometric classification of points into drift pieces.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NoConvergence, NotOnSurface, QueryOutsideTubularNeighborhood

MEMBERSHIP_TOL = 1e-9


def flatten_points(x, d):
    """Reshape ``x`` to ``(n, d)``; returns the array and the leading shape."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != d:
        raise ValueError(f"expected trailing dimension {d}, got shape {arr.shape}")
    return arr.reshape(-1, d), arr.shape[:-1]


def tangent_basis(normals):
    """Orthonormal bases of the orthogonal complements of unit ``normals``.

    Built from the Householder reflection that maps ``e_0`` to ``-sign(n_0) n``;
    the remaining columns of the reflection span the tangent space.
    Returns an array of shape ``(n, d, d-1)``.
    """
    normals = np.asarray(normals, dtype=float)
    n, d = normals.shape
    if d == 1:
        return np.zeros((n, 1, 0))
    sign = np.where(normals[:, 0] >= 0.0, 1.0, -1.0)
    v = normals.copy()
    v[:, 0] += sign
    vv = np.einsum("ni,ni->n", v, v)
    H = np.eye(d)[None] - 2.0 * v[:, :, None] * v[:, None, :] / vv[:, None, None]
    return H[:, :, 1:]


class Hypersurface:
    """Common interface.  Subclasses provide the canonical primitives."""

    dimension: int
    orientation: int

    # -- primitives supplied by subclasses -------------------------------
    @property
    def reach(self) -> float:
        raise NotImplementedError

    @property
    def piece_count(self) -> int:
        return 2

    def _offset(self, x):
        """Canonical signed offset; exact signed distance inside the tube."""
        raise NotImplementedError

    def _project(self, x):
        raise NotImplementedError

    def _canonical_normal(self, xi):
        raise NotImplementedError

    def _canonical_shape(self, xi):
        raise NotImplementedError

    def _sample(self, count, rng):
        raise NotImplementedError

    def _distance(self, x):
        return np.abs(self._offset(x))

    def _piece_index(self, x):
        return (self._offset(x) >= 0.0).astype(int)

    def _adjacent(self, xi):
        n = xi.shape[0]
        return np.zeros(n, dtype=int), np.ones(n, dtype=int)

    # -- public queries ---------------------------------------------------
    def flipped(self):
        return dataclasses.replace(self, orientation=-self.orientation)

    def distance(self, x):
        pts, lead = flatten_points(x, self.dimension)
        return self._distance(pts).reshape(lead)

    def signed_distance(self, x):
        """Offset ``(x - p(x)) . n(p(x))`` with the descriptor's orientation."""
        pts, lead = flatten_points(x, self.dimension)
        return (self.orientation * self._offset(pts)).reshape(lead)

    def project(self, x):
        pts, lead = flatten_points(x, self.dimension)
        dist = self._distance(pts)
        if np.any(dist >= self.reach):
            raise QueryOutsideTubularNeighborhood(
                f"distance {dist.max():.6g} is not below reach {self.reach:.6g}"
            )
        return self._project(pts).reshape(lead + (self.dimension,))

    def contains(self, x):
        pts, lead = flatten_points(x, self.dimension)
        tol = MEMBERSHIP_TOL * (1.0 + np.linalg.norm(pts, axis=1))
        return (self._distance(pts) <= tol).reshape(lead)

    def normal(self, xi):
        pts, lead = flatten_points(xi, self.dimension)
        tol = MEMBERSHIP_TOL * (1.0 + np.linalg.norm(pts, axis=1))
        if np.any(self._distance(pts) > tol):
            raise NotOnSurface("normal requested at a point off the surface")
        return (self.orientation * self._canonical_normal(pts)).reshape(lead + (self.dimension,))

    def shape_operator(self, xi):
        """Ambient matrix ``W`` with ``n'(xi) t = W t`` for tangent vectors ``t``."""
        pts, lead = flatten_points(xi, self.dimension)
        W = self.orientation * self._canonical_shape(pts)
        return W.reshape(lead + (self.dimension, self.dimension))

    def piece_index(self, x):
        """Drift piece containing ``x``; points on the surface go to the plus side."""
        pts, lead = flatten_points(x, self.dimension)
        return self._piece_index(pts).reshape(lead)

    def adjacent_pieces(self, xi):
        """Pieces on the ``-n`` and ``+n`` side of surface points."""
        pts, lead = flatten_points(xi, self.dimension)
        minus, plus = self._adjacent(pts)
        if self.orientation < 0:
            minus, plus = plus, minus
        return minus.reshape(lead), plus.reshape(lead)

    def sample(self, count, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        return self._sample(count, rng)

    # batch helpers used by the transform; no membership checks
    def local_frame(self, x):
        """Closest point, oriented offset, normal and shape operator for tube points."""
        p = self._project(x)
        n = self.orientation * self._canonical_normal(p)
        s = np.einsum("ni,ni->n", x - p, n)
        W = self.orientation * self._canonical_shape(p)
        return p, s, n, W


@dataclass(frozen=True, eq=False)
class Sphere(Hypersurface):
    center: np.ndarray
    radius: float
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dimension(self):
        return self.center.shape[0]

    @property
    def reach(self):
        return float(self.radius)

    def _offset(self, x):
        return np.linalg.norm(x - self.center, axis=1) - self.radius

    def _project(self, x):
        v = x - self.center
        rho = np.linalg.norm(v, axis=1)
        return self.center + self.radius * v / rho[:, None]

    def _canonical_normal(self, xi):
        v = xi - self.center
        return v / np.linalg.norm(v, axis=1)[:, None]

    def _canonical_shape(self, xi):
        n = self._canonical_normal(xi)
        d = self.dimension
        return (np.eye(d)[None] - n[:, :, None] * n[:, None, :]) / self.radius

    def _sample(self, count, rng):
        u = rng.standard_normal((count, self.dimension))
        u /= np.linalg.norm(u, axis=1)[:, None]
        return self.center + self.radius * u


@dataclass(frozen=True, eq=False)
class Hyperplane(Hypersurface):
    """The plane ``{x : a.x = b}`` with unit normal ``a``."""

    normal_vector: np.ndarray
    offset: float = 0.0
    orientation: int = 1
    sample_radius: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.normal_vector, dtype=float).reshape(-1)
        norm = np.linalg.norm(a)
        if norm == 0:
            raise ValueError("normal must be nonzero")
        object.__setattr__(self, "normal_vector", a / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def dimension(self):
        return self.normal_vector.shape[0]

    @property
    def reach(self):
        return np.inf

    def _offset(self, x):
        return x @ self.normal_vector - self.offset

    def _project(self, x):
        return x - self._offset(x)[:, None] * self.normal_vector

    def _canonical_normal(self, xi):
        return np.broadcast_to(self.normal_vector, xi.shape).copy()

    def _canonical_shape(self, xi):
        return np.zeros((xi.shape[0], self.dimension, self.dimension))

    def _sample(self, count, rng):
        x = rng.uniform(-self.sample_radius, self.sample_radius, (count, self.dimension))
        x += self.offset * self.normal_vector
        return self._project(x)


@dataclass(frozen=True)
class PointSet1D(Hypersurface):
    """Finitely many jump locations on the real line."""

    points: tuple
    orientation: int = 1

    def __post_init__(self):
        pts = tuple(float(p) for p in np.atleast_1d(self.points))
        if len(pts) == 0:
            raise ValueError("need at least one jump point")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("jump points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def dimension(self):
        return 1

    @property
    def reach(self):
        if len(self.points) == 1:
            return np.inf
        return 0.5 * float(np.min(np.diff(self.points)))

    @property
    def piece_count(self):
        return len(self.points) + 1

    def _nearest(self, x):
        pts = np.asarray(self.points)
        return np.argmin(np.abs(x[:, :1] - pts[None, :]), axis=1)

    def _offset(self, x):
        pts = np.asarray(self.points)
        return x[:, 0] - pts[self._nearest(x)]

    def _project(self, x):
        pts = np.asarray(self.points)
        return pts[self._nearest(x)][:, None]

    def _canonical_normal(self, xi):
        return np.ones_like(xi)

    def _canonical_shape(self, xi):
        return np.zeros((xi.shape[0], 1, 1))

    def _piece_index(self, x):
        return np.searchsorted(np.asarray(self.points), x[:, 0], side="right")

    def _adjacent(self, xi):
        k = self._nearest(xi)
        return k, k + 1

    def _sample(self, count, rng):
        return np.asarray(self.points)[:, None].copy()


@dataclass(frozen=True, eq=False)
class GraphSurface(Hypersurface):
    """The graph ``x_i = g(u)`` where ``u`` collects the other coordinates.

    ``g``, ``grad_g`` and ``hess_g`` act on ``(n, d-1)`` arrays and return
    ``(n,)``, ``(n, d-1)`` and ``(n, d-1, d-1)``.  ``reach`` is a user-supplied
    lower bound.  Sampling draws the free coordinates from ``sampler`` when
    given, else uniformly from the box ``[sample_low, sample_high]``.
    """

    dimension: int
    index: int
    g: Callable
    grad_g: Callable
    hess_g: Callable
    reach_bound: float
    orientation: int = 1
    sample_low: Optional[np.ndarray] = None
    sample_high: Optional[np.ndarray] = None
    sampler: Optional[Callable] = None
    tol: float = 1e-12
    max_iter: int = 100
    _free: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.index < self.dimension:
            raise ValueError("graph index out of range")
        if not self.reach_bound > 0:
            raise ValueError("reach must be positive")
        free = np.array([j for j in range(self.dimension) if j != self.index], dtype=int)
        object.__setattr__(self, "_free", free)

    @property
    def reach(self):
        return float(self.reach_bound)

    def _lift(self, u):
        xi = np.empty((u.shape[0], self.dimension))
        xi[:, self._free] = u
        xi[:, self.index] = self.g(u)
        return xi

    def _offset(self, x):
        # same sign as the signed distance; magnitude exact only after projection
        return x[:, self.index] - self.g(x[:, self._free])

    def _distance(self, x):
        return np.linalg.norm(x - self._project(x), axis=1)

    def _project(self, x):
        # damped Newton on the first-order condition of 1/2 |x - (u, g(u))|^2
        xu = x[:, self._free]
        xi_target = x[:, self.index]
        u = xu.copy()
        tol = self.tol * np.maximum(1.0, np.linalg.norm(x, axis=1))
        active = np.ones(x.shape[0], dtype=bool)
        eye = np.eye(self.dimension - 1)

        def objective(uu, rows):
            r = self.g(uu) - xi_target[rows]
            return 0.5 * (np.sum((uu - xu[rows]) ** 2, axis=1) + r * r)

        for _ in range(self.max_iter):
            rows = np.flatnonzero(active)
            if rows.size == 0:
                break
            ua = u[rows]
            r = self.g(ua) - xi_target[rows]
            grad = self.grad_g(ua)
            F = (ua - xu[rows]) + r[:, None] * grad
            done = np.linalg.norm(F, axis=1) <= tol[rows]
            active[rows[done]] = False
            keep = ~done
            if not keep.any():
                break
            rows, ua, r, grad, F = rows[keep], ua[keep], r[keep], grad[keep], F[keep]
            J = eye[None] + grad[:, :, None] * grad[:, None, :] + r[:, None, None] * self.hess_g(ua)
            step = np.linalg.solve(J, F[:, :, None])[:, :, 0]
            f0 = objective(ua, rows)
            t = np.ones(rows.size)
            trial = ua - step
            for _ in range(40):
                worse = objective(trial, rows) > f0 * (1.0 + 1e-14)
                if not worse.any():
                    break
                t[worse] *= 0.5
                trial[worse] = ua[worse] - t[worse, None] * step[worse]
            u[rows] = trial
        else:
            rows = np.flatnonzero(active)
            if rows.size:
                ua = u[rows]
                r = self.g(ua) - xi_target[rows]
                F = (ua - xu[rows]) + r[:, None] * self.grad_g(ua)
                if np.any(np.linalg.norm(F, axis=1) > tol[rows]):
                    raise NoConvergence("graph projection did not reach tolerance")
        return self._lift(u)

    def _canonical_normal(self, xi):
        N = np.zeros_like(xi)
        N[:, self._free] = -self.grad_g(xi[:, self._free])
        N[:, self.index] = 1.0
        return N / np.linalg.norm(N, axis=1)[:, None]

    def _canonical_shape(self, xi):
        u = xi[:, self._free]
        N = np.zeros_like(xi)
        N[:, self._free] = -self.grad_g(u)
        N[:, self.index] = 1.0
        norm = np.linalg.norm(N, axis=1)
        n = N / norm[:, None]
        d = self.dimension
        D = np.zeros((xi.shape[0], d, d))
        D[:, self._free[:, None], self._free[None, :]] = -self.hess_g(u)
        P = np.eye(d)[None] - n[:, :, None] * n[:, None, :]
        return P @ D / norm[:, None, None]

    def _sample(self, count, rng):
        if self.sampler is not None:
            u = np.asarray(self.sampler(count, rng), dtype=float)
        else:
            if self.sample_low is None or self.sample_high is None:
                raise ValueError("graph surface needs a sampling box or sampler")
            u = rng.uniform(self.sample_low, self.sample_high, (count, self.dimension - 1))
        return self._lift(u)


# ---------------------------------------------------------------------------
# checks

@dataclass
class NormalDerivativeReport:
    max_observed: float
    bound: float
    passed: bool


def normal_derivative_bound_check(surface, samples=256, tolerance=0.05, rng=None):
    """Compare the sampled operator norm of ``n'`` with ``2 (d-1) / reach``.

    ``n'`` is estimated by central differences of the normal field along an
    orthonormal tangent basis at each sampled surface point.
    """
    d = surface.dimension
    bound = 2.0 * (d - 1) / surface.reach
    xi = surface.sample(samples, rng)
    if d == 1:
        return NormalDerivativeReport(0.0, bound, True)
    n = surface.orientation * surface._canonical_normal(xi)
    E = tangent_basis(n)
    h = 1e-5 * (1.0 + np.linalg.norm(xi, axis=1))
    cols = []
    for j in range(d - 1):
        step = h[:, None] * E[:, :, j]
        n_plus = surface.orientation * surface._canonical_normal(surface._project(xi + step))
        n_minus = surface.orientation * surface._canonical_normal(surface._project(xi - step))
        cols.append((n_plus - n_minus) / (2.0 * h[:, None]))
    dn = np.stack(cols, axis=2)
    norms = np.linalg.norm(dn, ord=2, axis=(1, 2))
    worst = float(norms.max())
    return NormalDerivativeReport(worst, bound, worst <= bound * (1.0 + tolerance))


def max_normal_derivative(surface, samples=256, rng=None):
    """Largest operator norm of the shape operator over sampled surface points."""
    d = surface.dimension
    if d == 1:
        return 0.0
    xi = surface.sample(samples, rng)
    n = surface._canonical_normal(xi)
    E = tangent_basis(n)
    W = surface._canonical_shape(xi)
    WT = np.swapaxes(E, 1, 2) @ W @ E
    return float(np.linalg.norm(WT, ord=2, axis=(1, 2)).max())


def closest_point_violation(surface, samples=64, dense=20000, rng=None):
    """Largest amount by which a dense surface sample beats the computed projection.

    Points are drawn in the tube as ``xi + t n(xi)`` with ``|t| < 0.9 reach``
    (capped at 1).  A positive result means the projection is not the global
    minimizer for some sample, i.e. the supplied reach is too optimistic.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    width = 0.9 * min(surface.reach, 1.0)
    xi = surface.sample(samples, rng)
    n = surface._canonical_normal(xi)
    t = rng.uniform(-width, width, xi.shape[0])
    x = xi + t[:, None] * n
    p = surface._project(x)
    dist = np.linalg.norm(x - p, axis=1)
    cloud = surface.sample(dense, rng)
    worst = -np.inf
    for row in range(x.shape[0]):
        best = np.min(np.linalg.norm(cloud - x[row], axis=1))
        worst = max(worst, dist[row] - best)
    return float(worst)
