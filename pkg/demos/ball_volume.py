"""Monte-Carlo volume of a Hilbert-Schmidt ball against the closed form.

The ball {X : tr_n(X X*) <= r^2} is a Euclidean ball in C^{n^2}, so its
volume is exactly pi^N r^{2N} / N! with N = n^2.  This is the one microstate
set where the estimator can be checked end to end, normalization included:
h_n = (1/n^2) log vol + 2 log n should track the exact value and drift
toward 1 + log(pi) + 2 log(r) as n grows.
"""

import math

from scipy.special import gammaln

from mslab.matrices import RngStream
from mslab.microstates import (Constraint, NeighborhoodSpec,
                               entropy_normalization, estimate_volume)

RADIUS = 1.0
SAMPLES = 200_000
SEED = 7


def exact_h(n: int, r: float) -> float:
    big_n = n * n
    log_vol = big_n * math.log(math.pi) + 2 * big_n * math.log(r) \
        - float(gammaln(big_n + 1))
    return entropy_normalization(log_vol, n, 1)


def main():
    spec = NeighborhoodSpec(1, 4.0, (
        Constraint("sqrt(tr.re(x1 x1*))", 0.0, RADIUS),))
    stream = RngStream(SEED)
    limit = 1.0 + math.log(math.pi) + 2.0 * math.log(RADIUS)

    print(f"HS ball, radius {RADIUS}, {SAMPLES} samples per n")
    print(f"{'n':>3}  {'h_n (MC)':>10}  {'h_n exact':>10}  "
          f"{'abs err':>8}  {'hits':>7}")
    for n in (2, 4, 8):
        est = estimate_volume(spec, n, SAMPLES, stream.child(("ball", n)))
        h_mc = entropy_normalization(est.log_vol, n, 1)
        h_ex = exact_h(n, RADIUS)
        print(f"{n:>3}  {h_mc:>10.4f}  {h_ex:>10.4f}  "
              f"{abs(h_mc - h_ex):>8.4f}  {est.hits:>7}")
    print(f"large-n limit of h_n: {limit:.4f}")


if __name__ == "__main__":
    main()
