"""Independent reference computations used by the tests.

Nothing here imports the transform or geometry code of the package: the
bump, the transforms and their derivatives are rebuilt symbolically with
sympy from their closed forms.
"""
from __future__ import annotations

import functools

import numpy as np
import sympy as sp


# ---------------------------------------------------------------------------
# bump function and the quadratic bump phibar(y) = y |y| phi(y / c)

_u, _y, _c = sp.symbols("u y c", real=True)
_PHI = (1 - _u**2) ** 3


def phi_sym(order):
    """Derivative of the bump on ``|u| < 1`` as a numeric function."""
    return sp.lambdify(_u, sp.diff(_PHI, _u, order), "numpy")


def phibar_sym(order, side):
    """``d^order/dy^order [y|y| phi(y/c)]`` on the side ``sign(y) = side``, inside the support."""
    expr = side * _y**2 * _PHI.subs(_u, _y / _c)
    return sp.lambdify((_y, _c), sp.diff(expr, _y, order), "numpy")


# ---------------------------------------------------------------------------
# unit circle: inside (x, 0), outside (-x, -y), identity noise, outward normal
# alpha(xi) = (mu_in - mu_out) / 2 = (xi_1, xi_2 / 2); with rho = |x|,
# G(x) = x + phi((rho-1)/c) (rho-1)|rho-1| (x_1/rho, x_2/(2 rho))

@functools.lru_cache(maxsize=None)
def circle_transform(c):
    """Lambdified ``G``, ``G'`` and the Hessians of ``G`` for the unit circle inside the tube."""
    x1, x2 = sp.symbols("x1 x2", real=True)
    rho = sp.sqrt(x1**2 + x2**2)
    s = rho - 1
    # inside the tube |s| < c; the two branches of |s| are handled by sign
    fns = {}
    for side in (1, -1):
        bump = side * s**2 * (1 - (s / c) ** 2) ** 3
        G = sp.Matrix([x1 + bump * x1 / rho, x2 + bump * x2 / (2 * rho)])
        J = G.jacobian([x1, x2])
        H = [sp.hessian(G[k], [x1, x2]) for k in range(2)]
        fns[side] = (
            sp.lambdify((x1, x2), G, "numpy"),
            sp.lambdify((x1, x2), J, "numpy"),
            sp.lambdify((x1, x2), H, "numpy"),
        )
    return fns


def circle_eval(x, c, which):
    """Evaluate ``G`` (0), ``G'`` (1) or the Hessians (2) at one point."""
    x = np.asarray(x, dtype=float)
    rho = float(np.hypot(*x))
    s = rho - 1.0
    if abs(s) >= c:
        return [x.copy(), np.eye(2), np.zeros((2, 2, 2))][which]
    fn = circle_transform(c)[1 if s >= 0 else -1][which]
    return np.array(fn(*x), dtype=float).reshape([(2,), (2, 2), (2, 2, 2)][which])


def circle_inverse(z, c, x_start=None, tol=1e-14, max_iter=100):
    """Plain Newton solve of ``G(x) = z`` for one point."""
    z = np.asarray(z, dtype=float)
    x = z.copy() if x_start is None else np.asarray(x_start, dtype=float).copy()
    for _ in range(max_iter):
        r = circle_eval(x, c, 0) - z
        if np.linalg.norm(r) <= tol * (1 + np.linalg.norm(z)):
            return x
        x = x - np.linalg.solve(circle_eval(x, c, 1), r)
    raise RuntimeError("reference inverse did not converge")


def circle_drift(x):
    if x[0] ** 2 + x[1] ** 2 < 1.0:
        return np.array([x[0], 0.0])
    return -np.asarray(x, dtype=float)


def reference_gm_circle(x0, c, increments, dt):
    """Transform, Euler steps on the transformed SDE, transform back: one path.

    ``increments`` has shape ``(steps, 2)``.  Identity noise, so the
    transformed diffusion is ``G'(x)`` and the Ito correction is
    ``1/2 tr(G_k''(x))``.
    """
    x = np.asarray(x0, dtype=float)
    z = circle_eval(x, c, 0)
    for dw in increments:
        J = circle_eval(x, c, 1)
        H = circle_eval(x, c, 2)
        mu_t = J @ circle_drift(x) + 0.5 * np.trace(H, axis1=1, axis2=2)
        z = z + mu_t * dt + J @ dw
        x = circle_inverse(z, c, x_start=x)
    return x


# ---------------------------------------------------------------------------
# one-dimensional transform with several jumps

def transform_1d(x, points, alphas, c):
    """``x + sum_k alpha_k phi((x-xi_k)/c)(x-xi_k)|x-xi_k|`` evaluated directly."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    for xi, a in zip(points, alphas):
        y = x - xi
        u = y / c
        bump = np.where(np.abs(u) < 1, (1 - u**2) ** 3, 0.0)
        out = out + a * bump * y * np.abs(y)
    return out


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck: E X_T for dX = -theta X dt + sigma dW under Euler

def euler_ou_mean(x0, theta, T, steps):
    return x0 * (1.0 - theta * T / steps) ** steps
