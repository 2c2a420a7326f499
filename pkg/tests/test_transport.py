"""Orbit geometry: word-trace equivalence, psi distance, Wasserstein."""

import math

import numpy as np
import pytest

import oracles
from mslab.matrices import (
    RngStream,
    sample_gue,
    sample_ginibre,
    sample_haar_unitary,
    tuple_hs_norm,
)
from mslab.optimize import OptConfig
from mslab.transport import (
    SpectralMeasure,
    psi_distance,
    specht_equivalent,
    wasserstein_matrix,
    wasserstein_spectral,
)


def rng_of(label):
    return RngStream(101).child(label).generator()


# ---------------------------------------------------------------------------
# SpectralMeasure


def test_measure_sorts_and_merges():
    m = SpectralMeasure(((2.0, 0.25), (0.0, 0.5), (2.0, 0.25)))
    assert m.atoms == ((0.0, 0.5), (2.0, 0.5))


def test_measure_validation():
    with pytest.raises(ValueError, match="sum"):
        SpectralMeasure(((0.0, 0.5), (1.0, 0.4)))
    with pytest.raises(ValueError, match="positive"):
        SpectralMeasure(((0.0, 1.5), (1.0, -0.5)))


def test_measure_from_matrix_and_quantiles():
    x = np.diag([3.0, 1.0, 1.0, -1.0]).astype(complex)
    m = SpectralMeasure.from_matrix(x)
    assert m.atoms == ((-1.0, 0.25), (1.0, 0.5), (3.0, 0.25))
    np.testing.assert_allclose(m.quantiles(4), [-1.0, 1.0, 1.0, 3.0])
    diag = m.quantile_diagonal(4)
    assert np.allclose(np.diag(diag), [-1.0, 1.0, 1.0, 3.0])
    with pytest.raises(ValueError, match="self-adjoint"):
        SpectralMeasure.from_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_measure_csv_roundtrip():
    m = SpectralMeasure(((-1.5, 0.25), (0.0, 0.5), (2.25, 0.25)))
    assert SpectralMeasure.from_csv(m.to_csv()) == m


# ---------------------------------------------------------------------------
# wasserstein_spectral


def test_wasserstein_identical_is_zero():
    m = SpectralMeasure.uniform([0.0, 1.0, 5.0])
    assert wasserstein_spectral(m, m) == 0.0


def test_wasserstein_point_masses():
    a = SpectralMeasure.point_mass(-2.0)
    b = SpectralMeasure.point_mass(1.5)
    assert abs(wasserstein_spectral(a, b) - 3.5) < 1e-14


def test_wasserstein_shifted_uniform_pair():
    a = SpectralMeasure.uniform([0.0, 1.0])
    b = SpectralMeasure.uniform([1.0, 2.0])
    assert abs(wasserstein_spectral(a, b) - 1.0) < 1e-14


def test_wasserstein_matches_quantile_grid():
    rng = rng_of("wgrid")
    for _ in range(5):
        ka, kb = rng.integers(2, 7, size=2)
        wa = rng.random(ka) + 0.1
        wb = rng.random(kb) + 0.1
        mu = SpectralMeasure(tuple(zip(np.sort(rng.normal(size=ka)), wa / wa.sum())))
        nu = SpectralMeasure(tuple(zip(np.sort(rng.normal(size=kb)), wb / wb.sum())))
        k = 200_000
        grid = math.sqrt(np.mean((mu.quantiles(k) - nu.quantiles(k)) ** 2))
        assert abs(wasserstein_spectral(mu, nu) - grid) < 2e-3


def test_wasserstein_symmetry():
    mu = SpectralMeasure(((0.0, 0.3), (1.0, 0.7)))
    nu = SpectralMeasure(((-1.0, 0.6), (2.0, 0.4)))
    assert wasserstein_spectral(mu, nu) == wasserstein_spectral(nu, mu)


# ---------------------------------------------------------------------------
# specht_equivalent

# Two 3x3 self-adjoint matrices with equal word traces up to length 2 but a
# 0.72 trace gap at x^3: trace 0 and sum of squares 2.48 on both sides.
FIX_A = np.diag([1.2, -0.2, -1.0]).astype(complex)
FIX_B = np.diag([math.sqrt(1.24), 0.0, -math.sqrt(1.24)]).astype(complex)


def test_specht_distinct_at_length_one():
    x = np.diag([0.0, 1.0]).astype(complex)[None]
    y = np.diag([0.0, 0.0]).astype(complex)[None]
    res = specht_equivalent(x, y, max_len=4)
    assert res.verdict == "distinct"
    assert res.checked_len == 1
    assert res.witness_word == "x1"


def test_specht_fixture_matches_to_length_two():
    res = specht_equivalent(FIX_A[None], FIX_B[None], max_len=2)
    assert res.verdict == "undetermined"  # clean sweep but below n^2 = 9
    assert res.checked_len == 2


def test_specht_fixture_distinct_at_length_three():
    res = specht_equivalent(FIX_A[None], FIX_B[None], max_len=3)
    assert res.verdict == "distinct"
    assert res.checked_len == 3
    assert res.witness_word == "x1 x1 x1"
    va, vb = res.witness_values
    assert abs(va.real - 0.72 / 3.0) < 1e-12
    assert abs(vb.real) < 1e-12


def test_specht_equivalent_on_conjugates_at_sufficiency():
    rng = rng_of("specht-eq")
    for n in (2, 3):
        x = sample_ginibre(n, rng)[None]
        u = sample_haar_unitary(n, rng)
        y = (u @ x[0] @ u.conj().T)[None]
        res = specht_equivalent(x, y, max_len=n * n)
        assert res.verdict == "equivalent"
        assert res.sufficiency_len == n * n


def test_specht_never_distinct_on_conjugates():
    rng = rng_of("specht-safe")
    for n, d, max_len in ((4, 1, 6), (5, 2, 4), (8, 2, 4)):
        x = np.stack([sample_ginibre(n, rng) for _ in range(d)])
        u = sample_haar_unitary(n, rng)
        y = u @ x @ u.conj().T
        res = specht_equivalent(x, y, max_len=max_len)
        assert res.verdict != "distinct"


def test_specht_budget_exhaustion():
    rng = rng_of("specht-budget")
    x = sample_ginibre(4, rng)[None]
    u = sample_haar_unitary(4, rng)
    y = (u @ x[0] @ u.conj().T)[None]
    res = specht_equivalent(x, y, max_len=16, budget=100)
    assert res.verdict == "undetermined"
    assert res.checked_len < 16


def test_specht_rejects_shape_mismatch():
    with pytest.raises(ValueError, match="share"):
        specht_equivalent(np.eye(2)[None], np.eye(3)[None], max_len=2)
    with pytest.raises(ValueError, match="max_len"):
        specht_equivalent(np.eye(2)[None], np.eye(2)[None], max_len=0)


# ---------------------------------------------------------------------------
# psi_distance


def test_psi_zero_on_identical():
    rng = rng_of("psi-same")
    x = np.stack([sample_ginibre(6, rng), sample_gue(6, rng)])
    assert psi_distance(x, x, rng_stream=RngStream(1)) < 1e-8


def test_psi_conjugate_pair_reaches_machine_zero():
    rng = rng_of("psi-conj")
    for n in (4, 8, 16):
        x = np.stack([sample_gue(n, rng), sample_ginibre(n, rng)])
        v = sample_haar_unitary(n, rng)
        y = v @ x @ v.conj().T
        psi = psi_distance(x, y, rng_stream=RngStream(2))
        assert psi < 1e-6, f"n={n}: psi={psi}"


def test_psi_single_selfadjoint_equals_sorted_spectra():
    rng = rng_of("psi-sa")
    for n in (4, 8):
        a = sample_gue(n, rng)
        b = sample_gue(n, rng)
        oracle = oracles.sorted_spectrum_l2(a, b)
        psi = psi_distance(a[None], b[None], rng_stream=RngStream(3))
        assert abs(psi - oracle) < 1e-4


def test_psi_reverse_triangle():
    rng = rng_of("psi-rt")
    for _ in range(5):
        x = sample_ginibre(5, rng)[None]
        y = sample_ginibre(5, rng)[None]
        psi = psi_distance(x, y, rng_stream=RngStream(4))
        gap = abs(tuple_hs_norm(x) - tuple_hs_norm(y))
        assert psi >= gap - 1e-9


def test_psi_conjugation_invariance():
    rng = rng_of("psi-inv")
    a = sample_gue(6, rng)
    b = sample_gue(6, rng)
    u = sample_haar_unitary(6, rng)
    base = psi_distance(a[None], b[None], rng_stream=RngStream(5))
    moved = psi_distance((u @ a @ u.conj().T)[None], b[None],
                         rng_stream=RngStream(5))
    assert abs(base - moved) < 1e-6


def test_word_trace_match_implies_small_psi():
    # Conjugate pairs at n <= 4 match every word trace; the orbit distance
    # must then be tiny at the same n.
    rng = rng_of("psi-words")
    x = sample_ginibre(4, rng)[None]
    u = sample_haar_unitary(4, rng)
    y = (u @ x[0] @ u.conj().T)[None]
    res = specht_equivalent(x, y, max_len=6)
    assert res.verdict != "distinct"
    assert psi_distance(x, y, rng_stream=RngStream(6)) < 1e-4


# ---------------------------------------------------------------------------
# wasserstein_matrix


def test_wasserstein_matrix_identical():
    rng = rng_of("wm-same")
    a = sample_gue(8, rng)
    assert wasserstein_matrix(a, a) < 1e-12


def test_wasserstein_matrix_shifted_diagonal():
    x = np.diag([0.0, 1.0]).astype(complex)
    y = np.diag([1.0, 2.0]).astype(complex)
    assert abs(wasserstein_matrix(x, y) - 1.0) < 1e-12


def test_wasserstein_matrix_matches_spectral_oracle():
    rng = rng_of("wm-oracle")
    for n in (8, 32):
        for _ in range(5):
            a = sample_gue(n, rng)
            b = 0.7 * sample_gue(n, rng) + 0.2 * np.eye(n)
            direct = wasserstein_matrix(a, b)
            spectral = wasserstein_spectral(SpectralMeasure.from_matrix(a),
                                            SpectralMeasure.from_matrix(b))
            assert abs(direct - spectral) < 1e-4
            assert abs(direct - oracles.sorted_spectrum_l2(a, b)) < 1e-4


def test_wasserstein_matrix_rejects_non_selfadjoint():
    with pytest.raises(ValueError, match="self-adjoint"):
        wasserstein_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
