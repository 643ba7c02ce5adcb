"""Finite-state Markov kernels and the Gaussian AR(1) process.

States are 0-based internally (``0 .. d-1``); the text file formats in
:mod:`markov_pacbayes.io` are 1-based.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.signal import lfilter

from .exceptions import (
    DimensionMismatch,
    DTooSmall,
    EmptyMatrix,
    NegativeEntry,
    NonUniqueStationary,
    NumericalFailure,
    RowSumViolation,
    TOutOfRange,
    ValidationError,
    ZeroLength,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
EIGENVALUE_ONE_TOL = 1e-9
STATIONARY_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Validated row-stochastic ``d x d`` kernel.

    Build through :func:`validate_kernel`; the stored array is read-only.
    """

    entries: np.ndarray
    kernel_id: str = ""

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __repr__(self):
        return f"TransitionMatrix(d={self.d}, kernel_id={self.kernel_id!r})"


KernelLike = Union[TransitionMatrix, np.ndarray, list]


@dataclass(frozen=True)
class Trajectory:
    """Sampled path; ``states`` are 0-based, ``labels`` optional 0/1."""

    states: np.ndarray
    labels: Optional[np.ndarray] = None
    seed: Optional[int] = None
    kernel_id: str = ""

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.states):
            raise DimensionMismatch(
                f"labels length {len(self.labels)} != states length {len(self.states)}"
            )

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class AR1Process:
    """Stationary Gaussian AR(1) with unit noise variance."""

    a: float
    noise_sd: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise ValidationError(f"AR(1) coefficient must satisfy |a| < 1, got {self.a}")

    @property
    def variance(self) -> float:
        return 1.0 / (1.0 - self.a**2)

    @property
    def pseudo_spectral_gap(self) -> float:
        return 1.0 - self.a**2


@dataclass(frozen=True)
class ChainDiagnostics:
    pi: np.ndarray
    pi_star: float
    p_norm: float
    c_of_p: float
    ergodic_flag: bool


def validate_kernel(entries, kernel_id: str = "") -> TransitionMatrix:
    """Check that ``entries`` is a square row-stochastic matrix.

    Rows off by at most ``1e-9`` are renormalized (I/O rounding); rows
    already within ``1e-12`` are left bit-for-bit untouched.

    Raises
    ------
    EmptyMatrix, DimensionMismatch, NegativeEntry, RowSumViolation
    """
    if isinstance(entries, TransitionMatrix):
        return entries
    P = np.array(entries, dtype=float)
    if P.size == 0:
        raise EmptyMatrix("kernel has no entries")
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"kernel must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValidationError("kernel has non-finite entries")
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {P[i, j]} is negative")
    sums = P.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORMALIZE_TOL):
        i = int(np.argmax(dev))
        raise RowSumViolation(f"row {i} sums to {sums[i]!r} (deviation {dev[i]:.3g} > 1e-9)")
    fix = dev > ROW_SUM_TOL
    if np.any(fix):
        P[fix] /= sums[fix, None]
    P.setflags(write=False)
    return TransitionMatrix(P, kernel_id)


def as_kernel(P: KernelLike) -> TransitionMatrix:
    return P if isinstance(P, TransitionMatrix) else validate_kernel(P)


def check_distribution(weights, d: Optional[int] = None, name: str = "distribution") -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D array")
    if d is not None and w.size != d:
        raise DimensionMismatch(f"{name} has length {w.size}, expected {d}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(w.sum() - 1.0) > ROW_SUM_TOL:
        if abs(w.sum() - 1.0) > RENORMALIZE_TOL:
            raise ValidationError(f"{name} sums to {w.sum()!r}")
        w = w / w.sum()
    return w


def _unit_eigenvalue_multiplicity(P: np.ndarray) -> int:
    eig = np.linalg.eigvals(P.T)
    return int(np.sum(np.abs(eig - 1.0) <= EIGENVALUE_ONE_TOL))


def _power_iteration(P: np.ndarray, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    d = P.shape[0]
    pi = np.full(d, 1.0 / d)
    # lazy version avoids oscillation on periodic chains
    L = 0.5 * (P + np.eye(d))
    for _ in range(max_iter):
        nxt = pi @ L
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise NumericalFailure("power iteration for the stationary distribution did not converge")


def stationary_distribution(P: KernelLike) -> np.ndarray:
    """Unique stationary distribution of an ergodic kernel.

    Solves ``(P^T - I) x = 0`` with one equation replaced by ``sum(x) = 1``,
    falling back to power iteration if that system is singular.

    Raises
    ------
    NonUniqueStationary
        If the eigenvalue 1 of ``P^T`` is repeated (reducible chain).
    """
    M = np.asarray(as_kernel(P), dtype=float)
    d = M.shape[0]
    if d == 1:
        return np.ones(1)
    mult = _unit_eigenvalue_multiplicity(M)
    if mult > 1:
        raise NonUniqueStationary(
            f"eigenvalue 1 has multiplicity {mult}; the chain has no unique stationary distribution"
        )
    A = M.T - np.eye(d)
    A[-1, :] = 1.0
    b = np.zeros(d)
    b[-1] = 1.0
    try:
        if np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = _power_iteration(M)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ M - pi).sum()
    if resid > STATIONARY_RESIDUAL_TOL:
        pi = _power_iteration(M)
        resid = np.abs(pi @ M - pi).sum()
        if resid > STATIONARY_RESIDUAL_TOL:
            raise NumericalFailure(f"stationary residual {resid:.3g} exceeds tolerance")
    return pi


def _seed_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_trajectory(P: KernelLike, n: int, init=None, seed=None) -> Trajectory:
    """Sample ``n`` states of the chain; ``init`` defaults to stationarity.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``. The same
    seed always yields the same path.
    """
    K = as_kernel(P)
    if n < 1:
        raise ZeroLength(f"trajectory length must be >= 1, got {n}")
    d = K.d
    init = stationary_distribution(K) if init is None else check_distribution(init, d, "init")
    rng = _seed_rng(seed)
    u = rng.random(n).tolist()

    cum = np.cumsum(np.asarray(K), axis=1)
    cum[:, -1] = 1.0
    rows = cum.tolist()
    c0 = np.cumsum(init)
    c0[-1] = 1.0

    states = [0] * n
    s = bisect.bisect_right(c0.tolist(), u[0])
    states[0] = s
    for t in range(1, n):
        s = bisect.bisect_right(rows[s], u[t])
        states[t] = s
    seed_tag = seed if isinstance(seed, (int, np.integer)) else None
    return Trajectory(np.asarray(states, dtype=np.int64), seed=seed_tag, kernel_id=K.kernel_id)


def sample_labels(states, label_probs, seed=None) -> np.ndarray:
    """Draw ``Y_t ~ Bernoulli(label_probs[U_t])`` independently given the states."""
    p = np.asarray(label_probs, dtype=float)
    rng = _seed_rng(seed)
    return (rng.random(len(states)) < p[np.asarray(states)]).astype(np.int64)


def interpolate_kernels(P: KernelLike, Q: KernelLike, t: float) -> TransitionMatrix:
    """Entrywise mixture ``t * P + (1 - t) * Q``."""
    P, Q = as_kernel(P), as_kernel(Q)
    if P.d != Q.d:
        raise DimensionMismatch(f"kernels have sizes {P.d} and {Q.d}")
    if not 0.0 <= t <= 1.0:
        raise TOutOfRange(f"t must lie in [0, 1], got {t}")
    R = t * np.asarray(P) + (1.0 - t) * np.asarray(Q)
    return validate_kernel(R, kernel_id=f"R_t={t:g}")


def rank_one_kernel(pi) -> TransitionMatrix:
    """Kernel whose rows all equal ``pi`` (an i.i.d. sequence from ``pi``)."""
    pi = check_distribution(pi)
    return validate_kernel(np.tile(pi, (pi.size, 1)), kernel_id="rank-one")


def build_benchmark_kernel(d: int, p: float = 0.01, q: float = 0.001):
    """Slow-mixing benchmark ``P`` and its rank-one partner ``Q``.

    Rows 0, 1 and 4.. of ``P`` are uniform; state 2 moves to 0 with
    probability ``p`` and otherwise stays, state 3 moves to 1 with
    probability ``q`` and otherwise stays. ``Q`` repeats the stationary
    distribution of ``P`` on every row, so both share it.
    """
    if d < 4:
        raise DTooSmall(f"benchmark kernel needs d >= 4, got {d}")
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValidationError("p and q must be probabilities")
    P = np.full((d, d), 1.0 / d)
    P[2] = 0.0
    P[2, 0], P[2, 2] = p, 1.0 - p
    P[3] = 0.0
    P[3, 1], P[3, 3] = q, 1.0 - q
    P = validate_kernel(P, kernel_id=f"benchmark(d={d},p={p:g},q={q:g})")
    Q = validate_kernel(np.tile(stationary_distribution(P), (d, 1)), kernel_id="benchmark-Q")
    return P, Q


def sample_ar1(proc: AR1Process, n: int, seed=None) -> np.ndarray:
    """Stationary AR(1) path, started from ``N(0, 1/(1-a^2))``."""
    if n < 1:
        raise ZeroLength(f"sample length must be >= 1, got {n}")
    rng = _seed_rng(seed)
    x = rng.standard_normal(n)
    x[0] *= math.sqrt(proc.variance)
    return lfilter([1.0], [1.0, -proc.a], x)


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"distributions have shapes {p.shape} and {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def default_k_max(d: int) -> int:
    return int(min(10**6, max(1, 10 * d * d * math.ceil(math.log(d)))))


def mixing_time(P: KernelLike, eps: float = 0.25, k_max: Optional[int] = None) -> float:
    """Smallest ``k <= k_max`` with worst-case TV distance to stationarity <= eps.

    Returns ``math.inf`` when the threshold is not reached. A reducible chain
    never mixes for ``eps < 1/2`` (two closed classes stay at TV distance 1
    from each other), so it also returns ``math.inf`` there.
    """
    K = as_kernel(P)
    if not 0 < eps < 1:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    k_max = default_k_max(K.d) if k_max is None else int(k_max)
    try:
        pi = stationary_distribution(K)
    except NonUniqueStationary:
        if eps < 0.5:
            logger.warning("chain is reducible; mixing time is infinite")
            return math.inf
        raise
    M = np.asarray(K)
    Pk = M.copy()
    for k in range(1, k_max + 1):
        if 0.5 * np.abs(Pk - pi).sum(axis=1).max() <= eps:
            return k
        Pk = Pk @ M
    logger.warning("mixing time not reached within k_max=%d", k_max)
    return math.inf


def is_primitive(P: KernelLike) -> bool:
    """Irreducible and aperiodic: some power up to Wielandt's bound is positive."""
    M = np.asarray(as_kernel(P)) > 0
    d = M.shape[0]
    A = M.astype(np.int64)
    acc = A.copy()
    for _ in range((d - 1) ** 2 + 1):
        if acc.all():
            return True
        acc = np.minimum(acc @ A, 1)
    return bool(acc.all())


def chain_diagnostics(P: KernelLike) -> ChainDiagnostics:
    K = as_kernel(P)
    pi = stationary_distribution(K)
    pi_star = float(pi.min())
    p_norm = float(pi.max() / pi_star) if pi_star > 0 else math.inf
    c_of_p = p_norm * min(K.d, p_norm)
    return ChainDiagnostics(pi, pi_star, p_norm, c_of_p, is_primitive(K))
