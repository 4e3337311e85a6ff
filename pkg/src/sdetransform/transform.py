"""The transform G that removes a drift discontinuity, with derivatives and inverse.

Inside the tube of radius ``c`` around the surface,

    G(x) = x + phibar(s) * alpha(p(x)),    phibar(y) = y |y| phi(y / c),

where ``s = (x - p(x)) . n(p(x))`` is the signed offset and ``phi`` the
compactly supported bump ``(1 - u^2)^3``.  Outside the tube ``G`` is the
identity.  All evaluators take batches of points of shape ``(..., d)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateDiffusionAtJump,
    EmptySurfaceSampling,
    InverseIterationDiverged,
    NonParallelityViolated,
    NonpositiveBound,
    SingularJacobian,
)
from .geometry import flatten_points, max_normal_derivative, tangent_basis

log = logging.getLogger(__name__)

NONPARALLEL_TOL = 1e-6


# ---------------------------------------------------------------------------
# bump function

def bump(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - u * u
    return np.where(np.abs(u) <= 1.0, w ** 3, 0.0)


def bump_d1(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - u * u
    return np.where(np.abs(u) <= 1.0, -6.0 * u * w ** 2, 0.0)


def bump_d2(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - u * u
    return np.where(np.abs(u) <= 1.0, -6.0 * w ** 2 + 24.0 * u * u * w, 0.0)


def phibar(y, c):
    """``y |y| phi(y / c)``."""
    y = np.asarray(y, dtype=float)
    return y * np.abs(y) * bump(y / c)


def phibar_d1(y, c):
    y = np.asarray(y, dtype=float)
    u = y / c
    return 2.0 * np.abs(y) * bump(u) + y * np.abs(y) * bump_d1(u) / c


def phibar_d2(y, c, sign=None):
    """Second derivative; ``sign`` picks the one-sided value at ``y == 0``."""
    y = np.asarray(y, dtype=float)
    if sign is None:
        sign = np.where(y >= 0.0, 1.0, -1.0)
    u = y / c
    return 2.0 * sign * bump(u) + 4.0 * np.abs(y) * bump_d1(u) / c + y * np.abs(y) * bump_d2(u) / c ** 2


# ---------------------------------------------------------------------------
# jump-size field

def alpha_1d(mu_left, mu_right, sigma_at_jump, tol=NONPARALLEL_TOL):
    """Jump coefficient of a scalar SDE at a single discontinuity."""
    if mu_left == mu_right:
        return 0.0
    if abs(sigma_at_jump) < tol:
        raise DegenerateDiffusionAtJump(
            f"sigma = {sigma_at_jump!r} at a jump of size {mu_right - mu_left!r}"
        )
    return (mu_left - mu_right) / (2.0 * sigma_at_jump ** 2)


class AlphaField:
    """Jump-size field on the surface, built from the problem's drift pieces.

    ``alpha(xi) = (mu_minus(xi) - mu_plus(xi)) / (2 n^T sigma sigma^T n)`` where
    ``mu_minus``/``mu_plus`` are the drift pieces on the ``-n``/``+n`` side.

    ``jacobian``, if given, maps surface points ``(n, d)`` to ``(n, d, d)``
    Jacobians of a smooth extension of the field for the canonical normal
    orientation; only its action on tangent vectors is used.  Without it the
    tangential derivative is taken by central differences.
    """

    def __init__(self, problem, jacobian: Optional[Callable] = None, c0: float = NONPARALLEL_TOL):
        self.problem = problem
        self.surface = problem.surface
        self.jacobian = jacobian
        self.c0 = c0

    def __call__(self, xi, normals=None):
        surface = self.surface
        if normals is None:
            normals = surface.orientation * surface._canonical_normal(xi)
        minus, plus = surface.adjacent_pieces(xi)
        num = self.problem.evaluate_pieces(xi, minus) - self.problem.evaluate_pieces(xi, plus)
        sig = self.problem.diffusion(xi)
        st_n = np.einsum("nij,ni->nj", sig, normals)
        denom = 2.0 * np.einsum("nj,nj->n", st_n, st_n)
        jump = np.any(num != 0.0, axis=1)
        bad = jump & (denom < 2.0 * self.c0 ** 2)
        if bad.any():
            exc = DegenerateDiffusionAtJump if surface.dimension == 1 else NonParallelityViolated
            raise exc(f"|sigma^T n| below {self.c0} at a drift jump ({int(bad.sum())} points)")
        out = np.zeros_like(num)
        out[jump] = num[jump] / denom[jump, None]
        return out

    def tangent_derivative(self, xi, normals, basis):
        """Derivative of the field along the tangent basis: shape ``(n, d, d-1)``."""
        k = basis.shape[2]
        if k == 0:
            return np.zeros(xi.shape + (0,))
        if self.jacobian is not None:
            return self.surface.orientation * (self.jacobian(xi) @ basis)
        surface = self.surface
        h = 1e-5 * (1.0 + np.linalg.norm(xi, axis=1))
        cols = []
        for j in range(k):
            step = h[:, None] * basis[:, :, j]
            a_plus = self(surface._project(xi + step))
            a_minus = self(surface._project(xi - step))
            cols.append((a_plus - a_minus) / (2.0 * h[:, None]))
        return np.stack(cols, axis=2)

    def ambient_derivative(self, xi):
        """``d alpha_i / d x_j`` at surface points (tangential part only)."""
        n = self.surface.orientation * self.surface._canonical_normal(xi)
        E = tangent_basis(n)
        return self.tangent_derivative(xi, n, E) @ np.swapaxes(E, 1, 2)


def alpha_surface(problem, xi, jacobian=None):
    """Jump vector at surface point(s) ``xi``."""
    pts, lead = flatten_points(xi, problem.dimension)
    # membership check through the public normal query
    normals = problem.surface.normal(pts)
    return AlphaField(problem, jacobian)(pts, normals).reshape(lead + (problem.dimension,))


# ---------------------------------------------------------------------------
# bump radius

@dataclass
class CBound:
    """Outcome of the admissible-radius computation."""

    bound: float
    c: float
    reach_term: float
    alpha_term: float
    curvature_bound: float = 0.0


def c_bound_1d(alphas, points):
    """``min(min 1/(6|alpha_k|), min gap/2)``; infinite when nothing binds."""
    alphas = np.abs(np.asarray(alphas, dtype=float))
    if alphas.size == 0:
        raise EmptySurfaceSampling("no jump points")
    if not np.all(np.isfinite(alphas)):
        raise NonpositiveBound("jump coefficient is not finite")
    nz = alphas[alphas > 0]
    alpha_term = float(np.min(1.0 / (6.0 * nz))) if nz.size else np.inf
    gaps = np.diff(np.asarray(points, dtype=float))
    gap_term = float(np.min(gaps) / 2.0) if gaps.size else np.inf
    return min(alpha_term, gap_term), alpha_term, gap_term


def lemma_constant(d, kappa):
    return 256.0 * (kappa - 1.0) / (27.0 * kappa * (d - 1) * d)


def b_terms(alpha, dalpha, kappa):
    """Per-component radius bounds at one batch of surface points.

    ``alpha`` has shape ``(n, d)``, ``dalpha`` the ambient derivative
    ``(n, d, d)``.  Each entry is the positive root of
    ``|dalpha_ij| c^2 / A + 2 d^2 |alpha_i| c = 1``, written in the
    cancellation-free form ``C / (B + sqrt(B^2 + C))``.
    """
    n, d = alpha.shape
    A = lemma_constant(d, kappa)
    a = np.abs(alpha)[:, :, None] * np.ones((1, 1, d))
    da = np.abs(dalpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        flat = np.where(a > 0, 1.0 / (2.0 * d * d * a), np.inf)
        B = A * d * d * a / np.where(da > 0, da, 1.0)
        C = A / np.where(da > 0, da, 1.0)
        curved = C / (B + np.sqrt(B * B + C))
    return np.where(da > 0, curved, flat)


def choose_c(problem, alpha_field=None, kappa=2.0, safety_factor=0.9, samples=256, rng=None):
    """Admissible bump radius: ``safety_factor`` times the theoretical bound."""
    surface = problem.surface
    alpha_field = AlphaField(problem) if alpha_field is None else alpha_field
    xi = surface.sample(samples, rng)
    if xi.shape[0] == 0:
        raise EmptySurfaceSampling("surface sampling returned no points")
    alpha = alpha_field(xi)
    if not np.all(np.isfinite(alpha)):
        raise NonpositiveBound("jump coefficient is not finite on the samples")
    d = surface.dimension
    if d == 1:
        bound, alpha_term, gap_term = c_bound_1d(alpha[:, 0], surface.points)
        result = CBound(bound, 0.0, gap_term, alpha_term)
    else:
        K = max_normal_derivative(surface, samples, rng)
        reach_term = surface.reach / (kappa * max(K, 1.0))
        dalpha = alpha_field.ambient_derivative(xi)
        alpha_term = float(np.min(b_terms(alpha, dalpha, kappa)))
        result = CBound(min(reach_term, alpha_term), 0.0, reach_term, alpha_term, K)
    if not result.bound > 0:
        raise NonpositiveBound(f"radius bound {result.bound!r} is not positive")
    bound = result.bound
    if not np.isfinite(bound):
        # no jump and unbounded reach: G is the identity for any radius
        bound = min(surface.reach, 1.0) if np.isfinite(surface.reach) else 1.0
    result.c = safety_factor * bound
    return result


# ---------------------------------------------------------------------------
# the transform

@dataclass(frozen=True, eq=False)
class TransformSpec:
    problem: object
    alpha: AlphaField
    c: float
    kappa: float = 2.0
    inverse_tol: float = 1e-12
    max_iter: int = 200
    c_bound: Optional[CBound] = None
    hessian_step: float = 1e-4
    _d: int = field(init=False, repr=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("bump radius must be positive")
        if self.c > self.epsilon0:
            raise ValueError(f"bump radius {self.c} exceeds reach {self.epsilon0}")
        object.__setattr__(self, "_d", self.problem.dimension)

    @property
    def epsilon0(self):
        return self.problem.surface.reach

    @property
    def surface(self):
        return self.problem.surface

    # -- internal batch evaluators on (n, d) arrays ------------------------
    def _tube(self, x):
        return self.surface._distance(x) < self.c

    def _frame(self, x):
        p, s, n, W = self.surface.local_frame(x)
        return p, s, n, W, self.alpha(p, n)

    def _correction(self, x):
        """``G(x) - x`` for a batch; zero rows outside the tube."""
        out = np.zeros_like(x)
        tube = self._tube(x)
        if tube.any():
            xt = x[tube]
            p, s, n, W, a = self._frame(xt)
            out[tube] = phibar(s, self.c)[:, None] * a
        return out, tube

    def _tangent_parts(self, p, s, n, W):
        """Tangent basis, ``E^T W E`` and ``M^{-1} E^T`` with ``M = id + s E^T W E``."""
        E = tangent_basis(n)
        Et = np.swapaxes(E, 1, 2)
        WT = Et @ W @ E
        M = np.eye(E.shape[2])[None] + s[:, None, None] * WT
        return E, WT, np.linalg.solve(M, Et)

    def _grad_alpha(self, x):
        """Ambient gradient of ``alpha(p(x))``: rows are gradients of the components."""
        if self._d == 1:
            return np.zeros((x.shape[0], 1, 1))
        p, s, n, W = self.surface.local_frame(x)
        E, WT, MinvEt = self._tangent_parts(p, s, n, W)
        return self.alpha.tangent_derivative(p, n, E) @ MinvEt

    def _jacobian_tube(self, xt):
        p, s, n, W, a = self._frame(xt)
        d = self._d
        J = np.eye(d)[None] + phibar_d1(s, self.c)[:, None, None] * a[:, :, None] * n[:, None, :]
        if d > 1:
            E, WT, MinvEt = self._tangent_parts(p, s, n, W)
            GA = self.alpha.tangent_derivative(p, n, E) @ MinvEt
            J = J + phibar(s, self.c)[:, None, None] * GA
        return J

    def _derivatives_tube(self, xt):
        """Jacobian ``(k, d, d)`` and Hessians ``(k, d, d, d)`` at tube points."""
        p, s, n, W, a = self._frame(xt)
        k, d = xt.shape
        c = self.c
        f0, f1 = phibar(s, c), phibar_d1(s, c)
        sign = np.where(s > 0, 1.0, np.where(s < 0, -1.0, float(self.surface.orientation)))
        f2 = phibar_d2(s, c, sign)
        nn = n[:, :, None] * n[:, None, :]
        J = np.eye(d)[None] + f1[:, None, None] * a[:, :, None] * n[:, None, :]
        H = f2[:, None, None, None] * a[:, :, None, None] * nn[:, None]
        if d > 1:
            E, WT, MinvEt = self._tangent_parts(p, s, n, W)
            GA = self.alpha.tangent_derivative(p, n, E) @ MinvEt
            J = J + f0[:, None, None] * GA
            S = E @ WT @ MinvEt
            cross = n[:, None, :, None] * GA[:, :, None, :] + GA[:, :, :, None] * n[:, None, None, :]
            H = H + f1[:, None, None, None] * (cross + a[:, :, None, None] * S[:, None])
            # second derivative of alpha(p(x)) by central differences of its gradient
            h = self.hessian_step * (1.0 + np.linalg.norm(xt, axis=1))
            HA = np.empty((k, d, d, d))
            for j in range(d):
                step = np.zeros_like(xt)
                step[:, j] = h
                HA[..., j] = (self._grad_alpha(xt + step) - self._grad_alpha(xt - step)) / (2.0 * h[:, None, None])
            H = H + f0[:, None, None, None] * HA
        return J, 0.5 * (H + np.swapaxes(H, 2, 3))

    # -- public API ---------------------------------------------------------
    def value(self, x):
        pts, lead = flatten_points(x, self._d)
        corr, tube = self._correction(pts)
        out = pts.copy()
        out[tube] += corr[tube]
        return out.reshape(lead + (self._d,))

    def jacobian(self, x):
        pts, lead = flatten_points(x, self._d)
        J = np.broadcast_to(np.eye(self._d), (pts.shape[0], self._d, self._d)).copy()
        tube = self._tube(pts)
        if tube.any():
            J[tube] = self._jacobian_tube(pts[tube])
            _check_orientation(J[tube])
        return J.reshape(lead + (self._d, self._d))

    def hessian(self, x):
        """Hessians of the components: ``out[..., k, :, :]`` is that of ``G_k``."""
        pts, lead = flatten_points(x, self._d)
        d = self._d
        H = np.zeros((pts.shape[0], d, d, d))
        tube = self._tube(pts)
        if tube.any():
            H[tube] = self._derivatives_tube(pts[tube])[1]
        return H.reshape(lead + (d, d, d))

    def derivatives(self, x):
        """Jacobian and Hessians of a ``(n, d)`` batch, plus the tube mask."""
        n, d = x.shape
        J = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        H = np.zeros((n, d, d, d))
        tube = self._tube(x)
        if tube.any():
            J[tube], H[tube] = self._derivatives_tube(x[tube])
            _check_orientation(J[tube])
        return J, H, tube

    def inverse(self, z, guess=None):
        """Solve ``G(x) = z`` by damped Newton iteration.

        Points at distance ``>= c`` from the surface are returned unchanged,
        since ``G`` is the identity there and bijective.  ``guess`` (for
        instance the previous step's preimage) warm-starts the iteration.
        """
        pts, lead = flatten_points(z, self._d)
        out = pts.copy()
        rows = np.flatnonzero(self._tube(pts))
        if rows.size:
            start = None
            if guess is not None:
                start = flatten_points(guess, self._d)[0][rows]
            out[rows] = self._solve_inverse(pts[rows], start)
        return out.reshape(lead + (self._d,))

    def _residual(self, x, z):
        corr, _ = self._correction(x)
        return x + corr - z

    def _solve_inverse(self, z, start=None):
        d = self._d
        x = z.copy()
        tol = self.inverse_tol * (1.0 + np.linalg.norm(z, axis=1))
        active = np.arange(z.shape[0])
        r = self._residual(x, z)
        rn = np.linalg.norm(r, axis=1)
        if start is not None:
            # take the warm start only where it is strictly better than z itself
            r_s = self._residual(start, z)
            rn_s = np.linalg.norm(r_s, axis=1)
            better = rn_s < rn
            x[better], r[better], rn[better] = start[better], r_s[better], rn_s[better]
        for _ in range(self.max_iter):
            keep = rn > tol[active]
            active, r, rn = active[keep], r[keep], rn[keep]
            if active.size == 0:
                return x
            xa, za = x[active], z[active]
            J = np.broadcast_to(np.eye(d), (xa.shape[0], d, d)).copy()
            tube = self._tube(xa)
            if tube.any():
                J[tube] = self._jacobian_tube(xa[tube])
            step = np.linalg.solve(J, r[:, :, None])[:, :, 0]
            t = np.ones(xa.shape[0])
            trial = xa - step
            r_new = self._residual(trial, za)
            rn_new = np.linalg.norm(r_new, axis=1)
            for _ in range(40):
                # accept any decrease; at the noise floor the residual may stall
                worse = (rn_new > rn) & (rn_new > tol[active])
                if not worse.any():
                    break
                t[worse] *= 0.5
                trial[worse] = xa[worse] - t[worse, None] * step[worse]
                r_new[worse] = self._residual(trial[worse], za[worse])
                rn_new[worse] = np.linalg.norm(r_new[worse], axis=1)
            x[active] = trial
            r, rn = r_new, rn_new
        raise InverseIterationDiverged(
            f"{active.size} points did not invert within {self.max_iter} iterations"
        )


def _check_orientation(J):
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise SingularJacobian(
            f"det G' = {det.min():.3g} <= 0: bump radius is not admissible"
        )


def make_transform(problem, c=None, kappa=2.0, safety_factor=0.9, alpha_jacobian=None,
                   inverse_tol=1e-12, samples=256, rng=None):
    """Build a TransformSpec, choosing ``c`` from the theoretical bound if not given.

    A user-supplied ``c`` above the bound is accepted with a warning; it must
    still satisfy ``c <= reach``.
    """
    alpha = AlphaField(problem, alpha_jacobian)
    bound = choose_c(problem, alpha, kappa, safety_factor, samples, rng)
    if c is None:
        c = bound.c
    elif c > bound.bound * (1.0 + 1e-9):
        log.warning("bump radius c=%g exceeds the admissibility bound %.6g", c, bound.bound)
    return TransformSpec(problem, alpha, float(c), kappa, inverse_tol, c_bound=bound)


# ---------------------------------------------------------------------------
# admissibility

@dataclass
class AdmissibilityReport:
    c: float
    bound: CBound
    within_bound: bool
    within_reach: bool
    min_det: float
    passed: bool


def check_admissibility(problem, c, kappa=2.0, safety_factor=0.9, alpha_jacobian=None,
                        samples=256, rng=None):
    """Hard check on a bump radius.

    Passes when ``c <= reach`` and ``det G' > 0`` on sampled tube points.
    Exceeding the theoretical bound alone only produces a warning, since that
    bound is sufficient but not necessary.
    """
    rng = np.random.default_rng(3) if rng is None else rng
    alpha = AlphaField(problem, alpha_jacobian)
    bound = choose_c(problem, alpha, kappa, safety_factor, samples, rng)
    within_bound = c <= bound.bound * (1.0 + 1e-9)
    within_reach = c <= problem.surface.reach
    min_det = np.nan
    if within_reach:
        spec = TransformSpec(problem, alpha, float(c), kappa, c_bound=bound)
        xi = problem.surface.sample(samples, rng)
        n = problem.surface.orientation * problem.surface._canonical_normal(xi)
        reps = max(1, 1024 // xi.shape[0])
        xi = np.repeat(xi, reps, axis=0)
        n = np.repeat(n, reps, axis=0)
        t = rng.uniform(-c, c, xi.shape[0])
        x = xi + t[:, None] * n
        tube = spec._tube(x)
        J = spec._jacobian_tube(x[tube]) if tube.any() else np.eye(problem.dimension)[None]
        min_det = float(np.linalg.det(J).min())
    passed = bool(within_reach and min_det > 0)
    if passed and not within_bound:
        log.warning("c=%g exceeds the bound %.6g; accepted on sampled det G' > 0", c, bound.bound)
    return AdmissibilityReport(float(c), bound, bool(within_bound), bool(within_reach), min_det, passed)
