"""Inf-convolution smoothing of a quadratic potential, checked exactly.

For V(x) = c ||x||^2 the smoothing operator has a closed form: the
quadratic coefficient contracts to c/(1+2tc) and the heat part adds
2ctd.  The demo runs the Monte-Carlo/optimization version over a ladder
of times t on a fixed random matrix and prints both numbers, plus the
witness shift norm against its predicted scale 2tc/(1+2tc) ||x||.
"""

import numpy as np

from mslab.gibbs import Potential, hopf_lax_step
from mslab.matrices import RngStream, sample_ginibre, tuple_hs_norm
from mslab.optimize import OptConfig

C = 0.7
N = 12
Z_SAMPLES = 1500
SEED = 43


def closed_form(c, t, d, x_norm_sq):
    return c * x_norm_sq / (1.0 + 2.0 * t * c) + 2.0 * c * t * d


def main():
    pot = Potential(f"{C}*tr.re(x1 x1*)", lower_const=-0.1,
                    lower_quad=0.9 * C, upper_const=0.1, upper_quad=1.1 * C)
    rng = RngStream(SEED).child("x").generator()
    x = np.stack([sample_ginibre(N, rng)])
    xsq = tuple_hs_norm(x) ** 2
    cfg = OptConfig(num_starts=2, max_iter=300)

    print(f"V(x) = {C}*||x||^2 at a fixed n={N} point, ||x||^2 = {xsq:.4f}")
    print(f"{'t':>5}  {'Phi_t V (MC)':>12}  {'closed form':>12}  "
          f"{'rel err':>8}  {'|A| / |A| pred':>14}")
    for i, t in enumerate((0.05, 0.1, 0.2, 0.4)):
        res = hopf_lax_step(pot, t, x, z_samples=Z_SAMPLES, cfg=cfg,
                            rng_stream=RngStream(SEED).child(("z", i)))
        exact = closed_form(C, t, 1, xsq)
        a_norm = tuple_hs_norm(res.witness)
        a_pred = 2.0 * t * C / (1.0 + 2.0 * t * C) * tuple_hs_norm(x)
        print(f"{t:>5.2f}  {res.value:>12.5f}  {exact:>12.5f}  "
              f"{abs(res.value - exact) / exact:>8.1e}  {a_norm / a_pred:>14.4f}")


if __name__ == "__main__":
    main()
