"""Assumption checks, admissibility and the drift-continuity probe for every shipped example."""
import numpy as np

from sdetransform.examples import EXAMPLES
from sdetransform.geometry import normal_derivative_bound_check
from sdetransform.sde import TransformedSde, check_non_parallelity, continuity_probe
from sdetransform.transform import check_admissibility


def main():
    for name, build in EXAMPLES.items():
        b = build()
        G = b.transform()
        nonpar = check_non_parallelity(b.problem)
        nderiv = normal_derivative_bound_check(b.problem.surface)
        adm = check_admissibility(b.problem, G.c, kappa=G.kappa, alpha_jacobian=b.alpha_jacobian)
        cont = continuity_probe(TransformedSde(G))
        ratios = cont.ratios[np.isfinite(cont.ratios)]
        print(f"{name}: c={G.c:.4g} bound={adm.bound.bound:.3g} min det={adm.min_det:.3f} "
              f"non-parallelity={nonpar.minimum:.3f} |n'|={nderiv.max_observed:.3f}/{nderiv.bound:.3f} "
              f"continuity ratios=[{ratios.min():.1f}, {ratios.max():.1f}] "
              f"{'PASS' if cont.passed else 'FAIL'}" if ratios.size else f"{name}: no jump")


if __name__ == "__main__":
    main()
