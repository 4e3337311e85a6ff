"""Ready-made problems: the unit-circle jump, a 1D jump and the dividend system."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidIntensityMatrix, InvalidSimplexStart
from .geometry import GraphSurface, PointSet1D, Sphere
from .sde import SdeProblem
from .solver import SimulationConfig
from .transform import alpha_1d, make_transform


@dataclass
class ExampleBundle:
    name: str
    problem: SdeProblem
    c: Optional[float]
    kappa: float
    sim: SimulationConfig
    notes: dict = field(default_factory=dict)
    alpha_jacobian: Optional[Callable] = None
    slope_band: tuple = (0.35, 0.70)

    def transform(self, c=None, kappa=None, safety_factor=0.9, inverse_tol=1e-12):
        return make_transform(
            self.problem,
            c=self.c if c is None else c,
            kappa=self.kappa if kappa is None else kappa,
            safety_factor=safety_factor,
            alpha_jacobian=self.alpha_jacobian,
            inverse_tol=inverse_tol,
        )


def _identity_diffusion(d):
    eye = np.eye(d)

    def sigma(x):
        return np.broadcast_to(eye, (x.shape[0], d, d)).copy()

    return sigma


# ---------------------------------------------------------------------------
# unit circle

def _circle_inside(x):
    out = np.zeros_like(x)
    out[:, 0] = x[:, 0]
    return out


def _circle_outside(x):
    return -x


def _circle_alpha_jacobian(xi):
    # alpha(xi) = (xi_1, xi_2 / 2) for the outward normal
    return np.broadcast_to(np.diag([1.0, 0.5]), (xi.shape[0], 2, 2)).copy()


def build_unit_circle(x0=(0.1, 0.1), T=1.0, levels=10, paths=1024, seed=0, c=0.5):
    """Drift ``(x, 0)`` inside and ``-(x, y)`` outside the unit circle, identity noise."""
    problem = SdeProblem(
        surface=Sphere(center=np.zeros(2), radius=1.0),
        pieces=(_circle_inside, _circle_outside),
        diffusion_fn=_identity_diffusion(2),
        noise_dim=2,
        x0=np.asarray(x0, dtype=float),
        T=T,
        name="unit-circle",
    )
    return ExampleBundle(
        name="unit-circle",
        problem=problem,
        c=c,
        kappa=2.0,
        sim=SimulationConfig(tuple(x0), T, tuple(range(1, levels + 1)), paths, seed),
        notes={"c": "published", "x0": "default", "T": "default", "kappa": "default"},
        alpha_jacobian=_circle_alpha_jacobian,
    )


def build_no_jump(x0=(0.1, 0.1), T=1.0, levels=10, paths=1024, seed=0, c=0.5):
    """Unit-circle geometry with the same mean-reverting drift on both sides."""
    problem = SdeProblem(
        surface=Sphere(center=np.zeros(2), radius=1.0),
        pieces=(_circle_outside, _circle_outside),
        diffusion_fn=_identity_diffusion(2),
        noise_dim=2,
        x0=np.asarray(x0, dtype=float),
        T=T,
        name="no-jump",
    )
    return ExampleBundle(
        name="no-jump",
        problem=problem,
        c=c,
        kappa=2.0,
        sim=SimulationConfig(tuple(x0), T, tuple(range(1, levels + 1)), paths, seed),
        notes={"c": "default"},
    )


# ---------------------------------------------------------------------------
# one-dimensional jumps

def _column(fn):
    """Lift a scalar function (or constant) of ``(n,)`` to an ``(n, 1)`` piece."""
    if callable(fn):
        return lambda x: np.asarray(fn(x[:, 0]), dtype=float).reshape(-1, 1) * np.ones((x.shape[0], 1))
    value = float(fn)
    return lambda x: np.full((x.shape[0], 1), value)


def build_1d_jump(mu_left_fn=1.0, mu_right_fn=-1.0, jump_points=(0.0,), sigma_fn=1.0,
                  mu_pieces=None, x0=0.0, T=1.0, levels=10, paths=1024, seed=0, c=None):
    """Scalar SDE with drift jumps at ``jump_points``.

    ``mu_pieces`` lists one drift per interval (``len(jump_points) + 1``);
    with a single jump ``mu_left_fn``/``mu_right_fn`` may be used instead.
    Drifts and ``sigma_fn`` are functions of a ``(n,)`` array or constants.
    """
    surface = PointSet1D(tuple(jump_points))
    if mu_pieces is None:
        if len(surface.points) != 1:
            raise ValueError("several jumps need one drift per interval in mu_pieces")
        mu_pieces = (mu_left_fn, mu_right_fn)
    pieces = tuple(_column(f) for f in mu_pieces)
    sig = _column(sigma_fn)
    problem = SdeProblem(
        surface=surface,
        pieces=pieces,
        diffusion_fn=lambda x: sig(x)[:, :, None],
        noise_dim=1,
        x0=np.array([float(x0)]),
        T=T,
        name="1d-jump",
    )
    # validate the jump condition point by point
    for k, xi in enumerate(surface.points):
        pt = np.array([[xi]])
        alpha_1d(float(pieces[k](pt)[0, 0]), float(pieces[k + 1](pt)[0, 0]), float(sig(pt)[0, 0]))
    return ExampleBundle(
        name="1d-jump",
        problem=problem,
        c=c,
        kappa=2.0,
        sim=SimulationConfig((float(x0),), T, tuple(range(1, levels + 1)), paths, seed),
        notes={"c": "bound", "x0": "default", "T": "default"},
    )


# Shipped radius of the single-jump example.  Monotonicity of G holds far
# beyond the sufficient bound 1/(6|alpha|) (G' >= 1 - 0.33 c |alpha|), and
# the transformed drift gap behaves like 4h(1 + 9h/c^2): with c = 1/6 the
# gap is still dominated by its quadratic part at h = 1e-2.  The value
# mirrors the radius used on the unit circle.
SHIPPED_1D_RADIUS = 0.5


def shipped_1d_jump(**kwargs):
    """``build_1d_jump`` with the shipped radius unless ``c`` is given."""
    kwargs.setdefault("c", SHIPPED_1D_RADIUS)
    bundle = build_1d_jump(**kwargs)
    bundle.notes["c"] = "override" if kwargs["c"] == SHIPPED_1D_RADIUS else "user"
    return bundle


def staircase_drifts(points):
    """Constant drifts dropping by 2 at every jump (``alpha = 1`` for unit noise)."""
    m = len(points)
    return tuple(float(m - 2 * j) for j in range(m + 1))


# ---------------------------------------------------------------------------
# dividend maximization under partial information

@dataclass
class DividendParams:
    n_states: int = 5
    intensity: Optional[np.ndarray] = None
    alphas: Optional[np.ndarray] = None
    beta: float = 0.6
    ubar: float = 0.5
    b_intercept: float = 0.8
    b_slope: float = 0.5
    # b(abar) and its first two derivatives; overrides the affine threshold
    threshold: Optional[tuple] = None
    reach: Optional[float] = None
    x0: Optional[tuple] = None
    T: float = 1.0
    c: Optional[float] = 0.3

    def resolved(self):
        d = self.n_states
        Q = self.intensity
        if Q is None:
            Q = np.full((d, d), 1.0 / (d - 1))
            np.fill_diagonal(Q, -1.0)
        Q = np.asarray(Q, dtype=float)
        alphas = np.linspace(0.5, 1.5, d) if self.alphas is None else np.asarray(self.alphas, dtype=float)
        x0 = (1.0,) + (0.2,) * (d - 1) if self.x0 is None else tuple(self.x0)
        return Q, alphas, np.asarray(x0, dtype=float)


def clamp_simplex(x):
    """Clamp filter coordinates to ``[0, 1]``; renormalize when their sum exceeds 1."""
    pi = np.clip(x[:, 1:], 0.0, 1.0)
    total = pi.sum(axis=1)
    over = total > 1.0
    pi[over] /= total[over, None]
    out = x.copy()
    out[:, 1:] = pi
    return out


def build_dividend(params=None, levels=9, paths=1024, seed=0):
    """Surplus ``R`` and filter probabilities under a threshold dividend policy.

    State ``(R, pi_1, ..., pi_{d-1})``; one Brownian motion drives all
    coordinates.  Dividends at rate ``ubar`` are paid while ``R >= b(abar)``,
    so the drift jumps across the graph ``{R = b(abar(pi))}``.
    """
    params = DividendParams() if params is None else params
    Q, alphas, x0 = params.resolved()
    d = params.n_states
    if Q.shape != (d, d) or alphas.shape != (d,):
        raise ValueError("intensity matrix and state drifts must match the number of states")
    if np.any(np.abs(Q.sum(axis=1)) > 1e-12):
        raise InvalidIntensityMatrix("rows of the intensity matrix must sum to zero")
    if x0.shape != (d,):
        raise ValueError("initial state has the wrong dimension")
    if np.any(x0[1:] < 0) or x0[1:].sum() > 1.0:
        raise InvalidSimplexStart("initial filter probabilities must lie in the simplex")
    if not params.beta > 0 or not params.ubar > 0:
        raise ValueError("beta and ubar must be positive")

    beta, ubar = params.beta, params.ubar
    da = alphas[:-1] - alphas[-1]
    q_last = Q[-1, :-1]
    q_block = Q[:-1, :-1]

    def abar(pi):
        return alphas[-1] + pi @ da

    def filter_drift(pi):
        return q_last + pi @ q_block - pi.sum(axis=1, keepdims=True) * q_last

    def below(x):
        pi = x[:, 1:]
        return np.concatenate([abar(pi)[:, None], filter_drift(pi)], axis=1)

    def above(x):
        out = below(x)
        out[:, 0] -= ubar
        return out

    def diffusion(x):
        pi = x[:, 1:]
        col = np.concatenate([np.full((x.shape[0], 1), beta), pi * (alphas[:-1] - abar(pi)[:, None]) / beta], axis=1)
        return col[:, :, None]

    alpha_jacobian = None
    if params.threshold is None:
        b0, b1 = params.b_intercept, params.b_slope
        b = lambda a: b0 + b1 * a
        db = lambda a: np.full_like(a, b1)
        d2b = lambda a: np.zeros_like(a)
        reach = np.inf if params.reach is None else params.reach
        # flat surface: constant normal, and alpha = (ubar, 0, ...) / (2 q^2)
        # with q = sigma^T n a smooth function of pi
        normal = np.concatenate([[1.0], -b1 * da])
        normal /= np.linalg.norm(normal)

        def alpha_jacobian(xi):
            pi = xi[:, 1:]
            ab = abar(pi)
            q = beta * normal[0] + pi @ (alphas[:-1] * normal[1:]) / beta - ab * (pi @ normal[1:]) / beta
            dq = ((alphas[:-1][None, :] - ab[:, None]) * normal[1:][None, :]
                  - da[None, :] * (pi @ normal[1:])[:, None]) / beta
            J = np.zeros((xi.shape[0], d, d))
            J[:, 0, 1:] = -ubar * dq / q[:, None] ** 3
            return J
    else:
        b, db, d2b = params.threshold
        if params.reach is None:
            raise ValueError("a nonlinear threshold needs a user-supplied reach")
        reach = params.reach

    def sample_simplex(count, rng):
        # half uniform on the simplex, half pushed towards its faces, where
        # |sigma^T n| is smallest and the transform is most strained
        half = count // 2
        w = np.concatenate([rng.dirichlet(np.ones(d), count - half),
                            rng.dirichlet(np.full(d, 0.15), half)])
        return w[:, :-1]

    surface = GraphSurface(
        dimension=d,
        index=0,
        g=lambda u: b(abar(u)),
        grad_g=lambda u: db(abar(u))[:, None] * da[None, :],
        hess_g=lambda u: d2b(abar(u))[:, None, None] * da[None, :, None] * da[None, None, :],
        reach_bound=reach,
        sampler=sample_simplex,
    )
    problem = SdeProblem(
        surface=surface,
        pieces=(below, above),
        diffusion_fn=diffusion,
        noise_dim=1,
        x0=x0,
        T=params.T,
        post_step=clamp_simplex,
        name="dividend",
    )
    return ExampleBundle(
        name="dividend",
        problem=problem,
        c=params.c,
        kappa=2.0,
        sim=SimulationConfig(tuple(x0), params.T, tuple(range(1, levels + 1)), paths, seed),
        notes={k: "default" for k in ("intensity", "alphas", "beta", "ubar", "threshold", "x0", "T", "c")},
        alpha_jacobian=alpha_jacobian,
        slope_band=(0.30, 0.75),
    )


EXAMPLES = {
    "unit-circle": build_unit_circle,
    "1d-jump": shipped_1d_jump,
    "dividend": build_dividend,
    "no-jump": build_no_jump,
}
