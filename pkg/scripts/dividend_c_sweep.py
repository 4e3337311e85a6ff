"""Worst sampled ``det G'`` and continuity ratios of the dividend transform as the bump radius varies."""
import logging

import numpy as np

from sdetransform.examples import build_dividend
from sdetransform.sde import TransformedSde, continuity_probe
from sdetransform.transform import check_admissibility


def main(radii=(0.05, 0.1, 0.2, 0.3, 0.4)):
    logging.getLogger("sdetransform").setLevel(logging.ERROR)
    b = build_dividend()
    for c in radii:
        adm = check_admissibility(b.problem, c, alpha_jacobian=b.alpha_jacobian, samples=4096,
                                  rng=np.random.default_rng(0))
        cont = continuity_probe(TransformedSde(b.transform(c=c)))
        print(f"c={c:.3f} bound={adm.bound.bound:.2e} min det={adm.min_det:+.3f} "
              f"ratios=[{cont.ratios.min():.1f}, {cont.ratios.max():.1f}]")


if __name__ == "__main__":
    main()
