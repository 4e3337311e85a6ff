"""Simulating SDEs with a drift that jumps across a hypersurface.

A local transform ``G`` removes the drift discontinuity; Euler-Maruyama runs
on the transformed SDE and the result is mapped back by ``G^{-1}``.
"""
from .convergence import ConvergenceReport, estimate_errors, fit_order
from .examples import EXAMPLES, build_1d_jump, build_dividend, build_no_jump, build_unit_circle
from .geometry import GraphSurface, Hyperplane, PointSet1D, Sphere
from .sde import SdeProblem, TransformedSde
from .solver import BrownianLadder, run_monte_carlo, simulate
from .transform import TransformSpec, choose_c, make_transform

__all__ = [
    "BrownianLadder", "ConvergenceReport", "EXAMPLES", "GraphSurface", "Hyperplane",
    "PointSet1D", "SdeProblem", "Sphere", "TransformSpec", "TransformedSde",
    "build_1d_jump", "build_dividend", "build_no_jump", "build_unit_circle", "choose_c",
    "estimate_errors", "fit_order", "make_transform", "run_monte_carlo", "simulate",
]
