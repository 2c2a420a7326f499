"""Complex matrix primitives: traces, norms, ensembles, keyed RNG streams.

Conventions used throughout the package:

* matrices are ``complex128`` ndarrays of shape ``(..., n, n)``; leading axes
  are batch axes and every function here broadcasts over them,
* ``tr_n`` denotes the normalized trace (ordinary trace divided by n),
* the Hilbert-Schmidt inner product is built from the normalized trace,
  ``<x, y> = tr_n(x^* y)``, so the matrix entries divided by sqrt(n) are
  orthonormal coordinates.  "Lebesgue measure" in the volume estimators means
  Lebesgue measure in exactly these coordinates,
* random ensembles are normalized so that second moments are O(1): Ginibre
  entries are CN(0, 1/n) (``tr_n(Z Z^*) -> 1``), GUE matrices have
  ``tr_n(H^2) -> 1`` (semicircle of variance 1).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "MatrixTuple",
    "normalized_trace",
    "hs_inner",
    "hs_norm",
    "tuple_hs_inner",
    "tuple_hs_norm",
    "operator_norm",
    "sample_ginibre",
    "sample_gue",
    "sample_haar_unitary",
    "unitary_from_hermitian",
    "hermitian_part",
    "skew_norm",
    "tuple_stack",
]

HERMITIAN_INGEST_TOL = 1e-10


# ---------------------------------------------------------------------------
# RNG streams


def _label_to_uint64(label) -> int:
    """Stable 64-bit hash of a stream label (int labels pass through)."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """Keyed, reproducible random stream.

    A stream is identified by ``(seed, key)``; ``child(label)`` derives an
    independent substream deterministically from the label, so experiment
    components (proposal sampling, optimizer starts, chain noise, ...) can
    each own a stream without coordinating counters.  Streams map to
    counter-based Philox generators, so the same (seed, path of labels)
    always reproduces the same draws, independent of call order elsewhere.
    """

    seed: int
    key: int = 0

    def child(self, label) -> "RngStream":
        mixed = hashlib.blake2b(
            self.key.to_bytes(8, "little") + _label_to_uint64(label).to_bytes(8, "little"),
            digest_size=8,
        ).digest()
        return RngStream(self.seed, int.from_bytes(mixed, "little"))

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.key], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Matrix tuples


def tuple_stack(x) -> np.ndarray:
    """Coerce a tuple-like argument to a complex (d, n, n) stack.

    Accepts a MatrixTuple, a sequence of square matrices, or an ndarray that
    is already stacked.  A single (n, n) matrix becomes a 1-tuple.
    """
    if isinstance(x, MatrixTuple):
        return x.arrays
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != arr.shape[-2]:
        raise ValueError(f"expected (d, n, n) matrix stack, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class MatrixTuple:
    """Immutable d-tuple of n x n complex matrices stored as a (d, n, n) stack."""

    arrays: np.ndarray

    def __post_init__(self):
        arr = tuple_stack(self.arrays) if not isinstance(self.arrays, np.ndarray) else self.arrays
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.complex128))
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[-1] != arr.shape[-2]:
            raise ValueError(f"MatrixTuple needs shape (d, n, n), got {arr.shape}")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ValueError("MatrixTuple entries must be finite")
        object.__setattr__(self, "arrays", arr)

    @property
    def d(self) -> int:
        return self.arrays.shape[0]

    @property
    def n(self) -> int:
        return self.arrays.shape[-1]

    def __len__(self) -> int:
        return self.d

    def __getitem__(self, j) -> np.ndarray:
        return self.arrays[j]

    def hs_norm(self) -> float:
        return tuple_hs_norm(self.arrays)

    def op_norms(self) -> np.ndarray:
        return np.array([operator_norm(a) for a in self.arrays])


# ---------------------------------------------------------------------------
# Traces and inner products


def normalized_trace(x: np.ndarray) -> np.ndarray:
    """tr_n(x): ordinary trace over the last two axes divided by n."""
    x = np.asarray(x)
    n = x.shape[-1]
    return np.trace(x, axis1=-2, axis2=-1) / n


def hs_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized Hilbert-Schmidt inner product tr_n(x^* y), batched."""
    x = np.asarray(x)
    y = np.asarray(y)
    n = x.shape[-1]
    return np.einsum("...ij,...ij->...", np.conj(x), y) / n


def hs_norm(x: np.ndarray) -> np.ndarray:
    """sqrt(tr_n(x^* x)) per matrix, batched over leading axes."""
    return np.sqrt(np.maximum(hs_inner(x, x).real, 0.0))


def tuple_hs_inner(x, y) -> complex:
    """Sum of hs_inner over the variables of two matrix tuples."""
    xs = tuple_stack(x)
    ys = tuple_stack(y)
    return complex(np.sum(hs_inner(xs, ys)))


def tuple_hs_norm(x) -> float:
    """L2 norm of a matrix tuple: sqrt(sum_j tr_n(x_j^* x_j))."""
    xs = tuple_stack(x)
    return float(np.sqrt(np.sum(hs_inner(xs, xs).real)))


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def skew_norm(x: np.ndarray) -> np.ndarray:
    """hs norm of the anti-Hermitian part (0 iff x is Hermitian)."""
    return hs_norm(x - hermitian_part(x))


# ---------------------------------------------------------------------------
# Operator norm


def _opnorm_subspace_iteration(x: np.ndarray, rel_tol: float, max_iter: int):
    n = x.shape[-1]
    g = x.conj().T @ x
    scale = np.sqrt(np.trace(g).real / n)
    if not np.isfinite(scale) or scale == 0.0:
        return 0.0 if scale == 0.0 else None
    b = min(n, 4)
    # Deterministic start mixing all coordinates (identity columns can be
    # exactly orthogonal to the top singular subspace of structured inputs).
    k = np.arange(n)[:, None] * np.arange(b)[None, :]
    q = np.exp(2j * np.pi * k / max(n, 1)) / np.sqrt(n)
    q, _ = np.linalg.qr(q)
    prev = -np.inf
    for _ in range(max_iter):
        z = g @ q
        q, _ = np.linalg.qr(z)
        rq = q.conj().T @ (g @ q)
        top = float(np.max(np.linalg.eigvalsh(hermitian_part(rq))))
        cur = np.sqrt(max(top, 0.0))
        if abs(cur - prev) <= rel_tol * max(cur, 1e-300):
            return cur
        prev = cur
    return None


def operator_norm(x: np.ndarray, rel_tol: float = 1e-10, max_iter: int = 300) -> np.ndarray:
    """Largest singular value.

    Single matrices use deterministic QR-accelerated subspace iteration on
    x^* x (block size <= 4, fixed Fourier start) with an exact-SVD fallback
    when the iteration stalls on a degenerate leading block.  Batched inputs
    go straight to LAPACK SVD.  Both paths are deterministic.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim > 2:
        return np.linalg.svd(x, compute_uv=False)[..., 0]
    est = _opnorm_subspace_iteration(x, rel_tol, max_iter)
    if est is None:
        est = float(np.linalg.svd(x, compute_uv=False)[0])
    return est


# ---------------------------------------------------------------------------
# Ensembles


def sample_ginibre(n: int, rng: np.random.Generator, size=(), scale: float = 1.0) -> np.ndarray:
    """Complex Ginibre matrices with entries CN(0, scale^2/n).

    At scale 1 the normalized trace tr_n(Z Z^*) concentrates at 1 and the
    empirical *-distribution converges to the circular law of a standard
    circular element.
    """
    shape = tuple(np.atleast_1d(size).astype(int)) if size != () else ()
    full = shape + (n, n)
    z = rng.standard_normal(full) + 1j * rng.standard_normal(full)
    return z * (scale / np.sqrt(2.0 * n))


def sample_gue(n: int, rng: np.random.Generator, size=(), scale: float = 1.0) -> np.ndarray:
    """GUE matrices normalized so tr_n(H^2) -> scale^2 (semicircle on [-2s, 2s])."""
    a = sample_ginibre(n, rng, size=size, scale=scale)
    return (a + np.conj(np.swapaxes(a, -1, -2))) / np.sqrt(2.0)


def sample_haar_unitary(n: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """Haar-distributed unitaries via phase-corrected QR of a Ginibre matrix."""
    shape = tuple(np.atleast_1d(size).astype(int)) if size != () else ()
    full = shape + (n, n)
    z = rng.standard_normal(full) + 1j * rng.standard_normal(full)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    # QR alone is not Haar: fix the phase ambiguity of R's diagonal.
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def unitary_from_hermitian(h: np.ndarray, ingest_tol: float = HERMITIAN_INGEST_TOL) -> np.ndarray:
    """exp(i h) for Hermitian h, via exact eigendecomposition.

    Inputs within ``ingest_tol`` (relative, in hs norm) of Hermitian are
    symmetrized; anything farther is rejected rather than silently projected.
    """
    h = np.asarray(h, dtype=np.complex128)
    herm = hermitian_part(h)
    drift = hs_norm(h - herm)
    bound = ingest_tol * np.maximum(1.0, hs_norm(h))
    if np.any(drift > bound):
        raise ValueError("matrix is not Hermitian within the ingest tolerance")
    w, v = np.linalg.eigh(herm)
    phases = np.exp(1j * w)
    return np.einsum("...ij,...j,...kj->...ik", v, phases, np.conj(v))
