"""Independent oracles used by the test-suite.

Everything in this file is deliberately written by a *different* route than
the library code it checks: closed forms, brute force over all set
partitions, scipy quadrature, exact Gaussian integrals.  Frozen constants
carry their derivation inline.  Tests import from here; the library never
does.
"""

import itertools
import math

import numpy as np
from scipy.special import gammaln

# ---------------------------------------------------------------------------
# Exact ball volumes and entropy anchors


def log_ball_volume(complex_dim: int, radius: float) -> float:
    """log vol of the radius-r Euclidean ball in C^N (= R^{2N}).

    vol = pi^N r^{2N} / N!
    """
    n = complex_dim
    return n * math.log(math.pi) + 2 * n * math.log(radius) - float(gammaln(n + 1))


def ball_entropy_normalized(n: int, d: int, radius: float) -> float:
    """(1/n^2) log vol(ball in C^{d n^2}) + 2 d log n, exactly."""
    return log_ball_volume(d * n * n, radius) / (n * n) + 2 * d * math.log(n)


def ball_entropy_limit(d: int, radius: float) -> float:
    """Large-n limit of the above: d (1 + log pi) + 2 d log r (Stirling)."""
    return d * (1.0 + math.log(math.pi)) + 2 * d * math.log(radius)


def semicircle_log_energy_quadrature(npts: int = 4000) -> float:
    """log-energy integral of the standard semicircle by direct quadrature.

    I = double integral of log|s-t| against the semicircle density, computed
    with midpoint quadrature in CDF coordinates (points are semicircle
    quantiles, making the weight uniform and taming the log singularity by
    symmetric pair exclusion).  Known exact value: -1/4.
    """
    # Quantiles via bisection on the CDF.
    ps = (np.arange(npts) + 0.5) / npts
    xs = np.array([_semicircle_quantile(p) for p in ps])
    diff = np.abs(xs[:, None] - xs[None, :])
    mask = ~np.eye(npts, dtype=bool)
    return float(np.sum(np.log(diff[mask])) / (npts * npts))


def _semicircle_cdf(x: float) -> float:
    if x <= -2.0:
        return 0.0
    if x >= 2.0:
        return 1.0
    return 0.5 + (x * math.sqrt(4 - x * x) / 4 + math.asin(x / 2)) / (2 * math.pi) * 2


def _semicircle_quantile(p: float) -> float:
    lo, hi = -2.0, 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _semicircle_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def single_variable_entropy_oracle() -> float:
    """Quadrature oracle: log-energy + 3/4 + (1/2) log 2pi for the semicircle.

    Closed form: -1/4 + 3/4 + (1/2) log(2 pi) = (1/2) log(2 pi e) ~ 1.41894.
    """
    return semicircle_log_energy_quadrature() + 0.75 + 0.5 * math.log(2 * math.pi)


# ---------------------------------------------------------------------------
# Set partitions, crossing tests, Catalan numbers


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def all_set_partitions(n: int):
    """All set partitions of {0..n-1} as tuples of sorted-tuple blocks."""
    if n == 0:
        yield ()
        return
    for rest in all_set_partitions(n - 1):
        last = n - 1
        yield rest + ((last,),)
        for i, block in enumerate(rest):
            yield rest[:i] + (tuple(sorted(block + (last,))),) + rest[i + 1 :]


def is_noncrossing(partition) -> bool:
    """Brute-force crossing test: blocks a<b<c<d with a,c and b,d split."""
    blocks = [set(b) for b in partition]
    labels = {}
    for i, b in enumerate(blocks):
        for x in b:
            labels[x] = i
    elems = sorted(labels)
    for a, b, c, d in itertools.combinations(elems, 4):
        if labels[a] == labels[c] and labels[b] == labels[d] and labels[a] != labels[b]:
            return False
    return True


def noncrossing_partitions_bruteforce(n: int):
    return [p for p in all_set_partitions(n) if is_noncrossing(p)]


# ---------------------------------------------------------------------------
# Free cumulants: hand-derived low-order closed forms (single variable)
#
# m1 = k1
# m2 = k2 + k1^2
# m3 = k3 + 3 k1 k2 + k1^3
# m4 = k4 + 4 k1 k3 + 2 k2^2 + 6 k1^2 k2 + k1^4
# (coefficients = counts of noncrossing partitions of {1..4} by block type)


def moments_from_free_cumulants_closed(k):
    k1, k2, k3, k4 = k
    m1 = k1
    m2 = k2 + k1**2
    m3 = k3 + 3 * k1 * k2 + k1**3
    m4 = k4 + 4 * k1 * k3 + 2 * k2**2 + 6 * k1**2 * k2 + k1**4
    return (m1, m2, m3, m4)


def arcsine_even_moment(k: int) -> int:
    """2k-th moment of the free convolution of two symmetric Bernoulli(+-1).

    The result is the arcsine law on [-2, 2], whose even moments are the
    central binomial coefficients C(2k, k).
    """
    return math.comb(2 * k, k)


def semicircle_moment(k: int, variance: float = 1.0) -> float:
    """k-th moment of the semicircle with given variance (0 for odd k)."""
    if k % 2:
        return 0.0
    return catalan(k // 2) * variance ** (k // 2)


# ---------------------------------------------------------------------------
# Quartic one-matrix model: planar second moment, closed form
#
# For V(x) = x^2/2 + g x^4 the equilibrium measure is supported on [-c, c]
# with density (1/2pi)(1 + 2 g c^2 + 4 g x^2) sqrt(c^2 - x^2); normalization
# gives 3 g c^4 + c^2 = 4 and the second moment follows by direct integration:
# m2 = (1 + 2 g c^2) c^4 / 16 + g c^6 / 8.


def quartic_support_csq(g: float) -> float:
    if g == 0.0:
        return 4.0
    return (-1.0 + math.sqrt(1.0 + 48.0 * g)) / (6.0 * g)


def quartic_m2_closed_form(g: float) -> float:
    csq = quartic_support_csq(g)
    c4 = csq * csq
    c6 = c4 * csq
    return (1.0 + 2.0 * g * csq) * c4 / 16.0 + g * c6 / 8.0


def quartic_density_moment(g: float, k: int) -> float:
    """k-th moment of the quartic equilibrium density by quadrature."""
    csq = quartic_support_csq(g)
    c = math.sqrt(csq)
    xs = np.linspace(-c, c, 200001)
    rho = (1.0 + 2.0 * g * csq + 4.0 * g * xs**2) * np.sqrt(np.maximum(csq - xs**2, 0.0)) / (2 * np.pi)
    return float(np.trapezoid(rho * xs**k, xs))


# ---------------------------------------------------------------------------
# Hopf-Lax with quadratic potential: exact closed forms
#
# For V(X) = c ||X||_2^2 and Brownian tuple with E||Z_t||^2 = 2 t d:
# minimizing c(||X+A||^2 + 2td) + ||A||^2/(2t) over A gives
# A* = -X * 2tc/(1+2tc) and value c||X||^2/(1+2tc) + 2ctd.


def hopf_lax_quadratic_value(c: float, t: float, d: int, x_norm_sq: float) -> float:
    return c * x_norm_sq / (1.0 + 2.0 * t * c) + 2.0 * c * t * d


def hopf_lax_quadratic_witness_scale(c: float, t: float) -> float:
    return -2.0 * t * c / (1.0 + 2.0 * t * c)


def hopf_lax_iterated_value(c: float, t: float, k: int, d: int, x_norm_sq: float) -> float:
    """Exact k-fold composition of Phi_{t/k} on c ||X||^2.

    Coefficient recursion c_{j+1} = c_j / (1 + 2 (t/k) c_j) telescopes to
    c/(1+2tc); the diffusion constants accumulate stepwise.
    """
    s = t / k
    coef = c
    const = 0.0
    for _ in range(k):
        # Constants ride along additively; only the quadratic coefficient
        # contracts, and each step adds its own diffusion term 2 c_j s d.
        const = const + 2.0 * coef * s * d
        coef = coef / (1.0 + 2.0 * s * coef)
    return coef * x_norm_sq + const


# ---------------------------------------------------------------------------
# Misc linear-algebra oracles


def trace_norm_normalized(x: np.ndarray) -> float:
    """(1/n) * sum of singular values = sup over the unitary-ball pairing."""
    s = np.linalg.svd(np.asarray(x, complex), compute_uv=False)
    return float(np.sum(s) / x.shape[-1])


def sorted_spectrum_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized l2 distance of sorted spectra of two Hermitian matrices."""
    la = np.sort(np.linalg.eigvalsh(a))
    lb = np.sort(np.linalg.eigvalsh(b))
    return float(np.sqrt(np.mean((la - lb) ** 2)))


def haar_cross_term_std(tau_a2: float, tau_b2: float, n: int) -> float:
    """Exact Haar std of tr_n(A U B U^*) for centered Hermitian A, B."""
    return math.sqrt(tau_a2 * tau_b2 / (n * n - 1))
