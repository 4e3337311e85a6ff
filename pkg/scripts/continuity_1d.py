"""Transformed-drift gap ratios of the 1D jump against the bump radius.

For mu = 1/-1 at 0 and sigma = 1 the transformed drift gap is 4h(1 + 9h/c^2)
(to leading order), so the ratio between h = 1e-2 and 1e-3 falls below 20
only for c >= 0.27, while monotonicity of G requires c < 1/6.
"""
import logging

import numpy as np

from sdetransform.examples import build_1d_jump
from sdetransform.sde import TransformedSde, continuity_probe


def predicted_gap(h, c):
    return 4 * h * (1 + 9 * h / c**2)


def main(radii=(0.05, 0.1, 0.15, 1 / 6, 0.2, 0.27, 0.3)):
    logging.getLogger("sdetransform").setLevel(logging.ERROR)
    b = build_1d_jump()
    for c in radii:
        rep = continuity_probe(TransformedSde(b.transform(c=c)))
        gaps = rep.gaps[0]
        pred = [predicted_gap(h, c) for h in rep.offsets]
        dets = np.diff(b.transform(c=c).value(np.linspace(-c, c, 2001)[:, None])[:, 0]).min() > 0
        print(f"c={c:.4f} gaps={np.round(gaps, 6)} predicted={np.round(pred, 6)} "
              f"ratios={np.round(rep.ratios[0], 2)} monotone={dets}")


if __name__ == "__main__":
    main()
