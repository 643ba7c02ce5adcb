"""Time reversal, multiplicative reversibilization and the pseudo-spectral gap."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import DegenerateSpectrum, NotReversible, NotStationary, ZeroStationaryMass
from .markov_core import (
    EIGENVALUE_ONE_TOL,
    KernelLike,
    TransitionMatrix,
    as_kernel,
    check_distribution,
    stationary_distribution,
    validate_kernel,
)

logger = logging.getLogger(__name__)

DEFAULT_K = 20
STATIONARITY_TOL = 1e-8
REVERSIBILITY_TOL = 1e-8


class ErgodicityWarning(UserWarning):
    """Eigenvalue 1 is repeated, so the reported gap is 0."""


class TruncationWarning(UserWarning):
    """The maximizing power sits on the truncation boundary ``K``."""


@dataclass(frozen=True)
class ReversibilizationResult:
    k: int
    kernel: TransitionMatrix
    gap: float


@dataclass(frozen=True)
class PseudoGapResult:
    value: float
    argmax_k: int
    per_k: Tuple[Tuple[int, float], ...]


def time_reversal(P: KernelLike, pi) -> TransitionMatrix:
    """Adjoint kernel ``P*(i, j) = pi(j) P(j, i) / pi(i)``."""
    K = as_kernel(P)
    pi = check_distribution(pi, K.d, "pi")
    if np.any(pi <= 0):
        raise ZeroStationaryMass("time reversal needs a strictly positive stationary distribution")
    M = np.asarray(K)
    resid = np.abs(pi @ M - pi).sum()
    if resid > STATIONARITY_TOL:
        raise NotStationary(f"||pi P - pi||_1 = {resid:.3g} exceeds {STATIONARITY_TOL}")
    R = (M.T * pi[None, :]) / pi[:, None]
    R /= R.sum(axis=1, keepdims=True)
    return validate_kernel(R, kernel_id=f"{K.kernel_id}*")


def _symmetrized(M: np.ndarray, pi: np.ndarray) -> np.ndarray:
    s = np.sqrt(pi)
    S = s[:, None] * M / s[None, :]
    return 0.5 * (S + S.T)


def spectral_gap_reversible(M: KernelLike, pi) -> float:
    """``1 - lambda_2`` for a kernel reversible with respect to ``pi``.

    Eigenvalues of the ``pi``-symmetrized matrix are clamped to ``[0, 1]``
    before use. If eigenvalue 1 is repeated the chain is not ergodic; the
    gap is reported as 0 with an :class:`ErgodicityWarning`.
    """
    A = np.asarray(as_kernel(M), dtype=float)
    pi = check_distribution(pi, A.shape[0], "pi")
    flux = pi[:, None] * A
    asym = np.abs(flux - flux.T).max()
    if asym > REVERSIBILITY_TOL:
        raise NotReversible(f"detailed balance violated by {asym:.3g}")
    if A.shape[0] == 1:
        raise DegenerateSpectrum("a single-state kernel has no eigenvalue besides 1")
    eig = np.clip(np.linalg.eigvalsh(_symmetrized(A, pi)), 0.0, 1.0)
    top = eig >= 1.0 - EIGENVALUE_ONE_TOL
    if top.sum() > 1:
        warnings.warn("eigenvalue 1 is repeated; spectral gap is 0", ErgodicityWarning, stacklevel=2)
        return 0.0
    return float(1.0 - eig[~top].max())


def multiplicative_reversibilization(P: KernelLike, k: int, pi=None, reversal=None) -> ReversibilizationResult:
    """The kernel ``(P*)^k P^k`` together with its spectral gap."""
    K = as_kernel(P)
    pi = stationary_distribution(K) if pi is None else check_distribution(pi, K.d, "pi")
    Ps = np.asarray(time_reversal(K, pi) if reversal is None else reversal)
    M = np.asarray(K)
    Mk = np.linalg.matrix_power(M, k)
    Psk = np.linalg.matrix_power(Ps, k)
    R = Psk @ Mk
    R = validate_kernel(R / R.sum(axis=1, keepdims=True))
    return ReversibilizationResult(k, R, spectral_gap_reversible(R, pi))


def pseudo_spectral_gap(P: KernelLike, K: int = DEFAULT_K, pi=None) -> PseudoGapResult:
    """Truncated pseudo-spectral gap ``max_{k <= K} gamma((P*)^k P^k) / k``.

    Ties go to the smallest ``k``. A maximizer at ``k == K > 1`` raises a
    :class:`TruncationWarning` since a larger ``K`` might do better.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    kern = as_kernel(P)
    pi = stationary_distribution(kern) if pi is None else check_distribution(pi, kern.d, "pi")
    M = np.asarray(kern)
    Ps = np.asarray(time_reversal(kern, pi))
    Mk = np.eye(kern.d)
    Psk = np.eye(kern.d)
    per_k: List[Tuple[int, float]] = []
    for k in range(1, K + 1):
        Mk = Mk @ M
        Psk = Psk @ Ps
        R = Psk @ Mk
        R /= R.sum(axis=1, keepdims=True)
        per_k.append((k, spectral_gap_reversible(R, pi) / k))
    vals = np.array([v for _, v in per_k])
    i = int(np.argmax(vals))
    if K > 1 and i == K - 1:
        warnings.warn(f"pseudo-spectral gap maximized at the truncation boundary k={K}",
                      TruncationWarning, stacklevel=2)
    return PseudoGapResult(float(vals[i]), i + 1, tuple(per_k))


def pseudo_spectral_gap_svd(P: KernelLike, K: int = DEFAULT_K, pi=None) -> float:
    """Same quantity through singular values of ``D^{1/2} P^k D^{-1/2}``.

    Independent route: the symmetrized ``(P*)^k P^k`` equals ``A^T A`` with
    ``A = D^{1/2} P^k D^{-1/2}``, so its eigenvalues are squared singular
    values of ``A``. Used to cross-check :func:`pseudo_spectral_gap`.
    """
    kern = as_kernel(P)
    pi = stationary_distribution(kern) if pi is None else np.asarray(pi, dtype=float)
    s = np.sqrt(pi)
    M = np.asarray(kern)
    best = -np.inf
    for k in range(1, K + 1):
        A = s[:, None] * np.linalg.matrix_power(M, k) / s[None, :]
        sv = np.sort(np.linalg.svd(A, compute_uv=False))[::-1]
        lam2 = min(1.0, sv[1] ** 2) if sv.size > 1 else 0.0
        best = max(best, (1.0 - lam2) / k)
    return float(best)
