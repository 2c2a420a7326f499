"""Deterministic multi-start optimizers over operator-norm balls and U(n).

Both optimizers are plain first-order methods chosen for reproducibility:
projected gradient with Armijo backtracking on the ball, Riemannian descent
with exact exponential retraction on the unitary group.  Starts, step rules
and tie-breaking are all deterministic given an RngStream, which is what the
bit-for-bit determinism contract of the experiment layer needs.

Values returned by minimizers are certified *upper* bounds of the infimum
(they are values actually attained at feasible witnesses); suprema computed
by negation are therefore certified lower bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .matrices import (
    RngStream,
    hermitian_part,
    hs_norm,
    sample_ginibre,
    sample_haar_unitary,
    tuple_hs_inner,
    tuple_hs_norm,
)

__all__ = ["OptConfig", "OptResult", "project_opnorm_ball", "minimize_over_ball",
           "minimize_over_unitaries"]


@dataclass(frozen=True)
class OptConfig:
    """Shared knobs for the ball and unitary optimizers."""

    max_iter: int = 500
    num_starts: int = 8
    step_init: float = 1.0
    armijo_c: float = 1e-4
    min_step: float = 1e-12
    grad_tol: float = 1e-8
    value_tol: float = 1e-12
    reunitarize_every: int = 50


@dataclass
class OptResult:
    value: float
    witness: np.ndarray
    converged: bool
    iterations: int
    start_index: int
    start_values: tuple = ()

    @property
    def start_spread(self) -> float:
        """Gap between the two best starts; crude landscape diagnostic."""
        vals = sorted(self.start_values)
        if len(vals) < 2:
            return 0.0
        return float(vals[1] - vals[0])


def project_opnorm_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Clip singular values at ``radius``, per matrix in a (..., n, n) stack.

    This is the metric projection onto the operator-norm ball in hs norm.
    """
    x = np.asarray(x, dtype=np.complex128)
    u, s, vh = np.linalg.svd(x)
    s = np.minimum(s, radius)
    return np.einsum("...ij,...j,...jk->...ik", u, s, vh)


def _ball_starts(shape, radius: float, num_starts: int, rng: np.random.Generator):
    """Zero start plus Ginibre draws at graded scales inside the ball."""
    d, n, _ = shape
    starts = [np.zeros(shape, dtype=np.complex128)]
    for k in range(num_starts - 1):
        scale = radius * (0.25 + 0.5 * (k % 3) / 2.0)
        z = sample_ginibre(n, rng, size=(d,), scale=1.0)
        # Ginibre op norm concentrates near 2/sqrt(n)*sqrt(n)=2; normalize to
        # the requested scale then clip to be safe.
        z = z / max(np.max(np.linalg.svd(z, compute_uv=False)[..., 0]), 1e-30) * scale
        starts.append(project_opnorm_ball(z, radius))
    return starts


def minimize_over_ball(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    shape,
    radius: float,
    cfg: OptConfig = OptConfig(),
    rng_stream: Optional[RngStream] = None,
    extra_starts: Sequence[np.ndarray] = (),
) -> OptResult:
    """Projected-gradient minimization over a product of operator-norm balls.

    ``shape`` is (d, n, n): the variable is a d-tuple, each entry confined to
    the radius-``radius`` ball.  ``gradient`` returns the tuple G with
    d/ds f(X + sH)|_0 = Re <G, H> in the normalized hs pairing.  Ties between
    starts break to the smallest value, then the lowest start index.
    """
    shape = tuple(shape)
    rng = (rng_stream or RngStream(0)).child("ball-starts").generator()
    starts = list(extra_starts) + _ball_starts(shape, radius, cfg.num_starts, rng)

    best: Optional[OptResult] = None
    start_values = []
    for s_idx, x0 in enumerate(starts):
        x = project_opnorm_ball(np.array(x0, dtype=np.complex128, copy=True), radius)
        fx = float(objective(x))
        step = cfg.step_init
        converged = False
        it = 0
        for it in range(1, cfg.max_iter + 1):
            g = gradient(x)
            gnorm = tuple_hs_norm(g)
            if gnorm <= cfg.grad_tol:
                converged = True
                break
            moved = False
            while step >= cfg.min_step:
                cand = project_opnorm_ball(x - step * g, radius)
                fc = float(objective(cand))
                # Armijo against the projected displacement.
                disp = cand - x
                decrease = -cfg.armijo_c * np.real(tuple_hs_inner(g, disp))
                if fc <= fx - max(decrease, 0.0) and fc < fx:
                    x, fx = cand, fc
                    moved = True
                    step = min(step * 1.5, cfg.step_init * 4.0)
                    break
                step *= 0.5
            if not moved:
                converged = True  # no feasible descent left at min_step
                break
        start_values.append(fx)
        res = OptResult(fx, x, converged, it, s_idx)
        if best is None or fx < best.value - cfg.value_tol:
            best = res
    best.start_values = tuple(start_values)
    return best


def _unitary_starts(n: int, num_starts: int, rng: np.random.Generator,
                    extra: Sequence[np.ndarray]):
    starts = list(extra) + [np.eye(n, dtype=np.complex128)]
    while len(starts) < len(extra) + num_starts:
        starts.append(sample_haar_unitary(n, rng))
    return starts


def _expm_skew(omega: np.ndarray) -> np.ndarray:
    """exp of a skew-Hermitian matrix via eigh of -i*omega (exactly unitary)."""
    h = hermitian_part(-1j * omega)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * w)) @ v.conj().T


def minimize_over_unitaries(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    n: int,
    cfg: OptConfig = OptConfig(),
    rng_stream: Optional[RngStream] = None,
    extra_starts: Sequence[np.ndarray] = (),
) -> OptResult:
    """Riemannian descent over U(n) with exponential-map retraction.

    ``gradient`` returns the Euclidean gradient G with df = Re <G, dU>.  The
    Riemannian step is U <- exp(-t * skew(G U^*)) U, which stays exactly
    unitary; accumulated rounding is squeezed out by QR re-unitarization
    every ``cfg.reunitarize_every`` iterations.  Witnesses are unitaries
    (equivalently e^{iH} for Hermitian H).
    """
    rng = (rng_stream or RngStream(0)).child("unitary-starts").generator()
    starts = _unitary_starts(n, cfg.num_starts, rng, extra_starts)

    best: Optional[OptResult] = None
    start_values = []
    for s_idx, u0 in enumerate(starts):
        u = np.array(u0, dtype=np.complex128, copy=True)
        fu = float(objective(u))
        step = cfg.step_init
        converged = False
        it = 0
        for it in range(1, cfg.max_iter + 1):
            g = gradient(u)
            omega = 0.5 * (g @ u.conj().T - u @ g.conj().T)  # skew projection
            onorm = float(hs_norm(omega))
            if onorm <= cfg.grad_tol:
                converged = True
                break
            moved = False
            while step >= cfg.min_step:
                cand = _expm_skew(-step * omega) @ u
                fc = float(objective(cand))
                if fc <= fu - cfg.armijo_c * step * onorm**2 and fc < fu:
                    u, fu = cand, fc
                    moved = True
                    step = min(step * 1.5, cfg.step_init * 4.0)
                    break
                step *= 0.5
            if not moved:
                converged = True
                break
            if it % cfg.reunitarize_every == 0:
                q, r = np.linalg.qr(u)
                u = q * (np.diagonal(r) / np.abs(np.diagonal(r)))[None, :]
        start_values.append(fu)
        res = OptResult(fu, u, converged, it, s_idx)
        if best is None or fu < best.value - cfg.value_tol:
            best = res
    best.start_values = tuple(start_values)
    return best
