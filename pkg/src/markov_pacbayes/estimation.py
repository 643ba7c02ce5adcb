"""Single-trajectory estimators of the pseudo-spectral gap.

Two families: the smoothed plug-in estimator for finite chains, and the
inverse mean-square estimator for the unit-noise AR(1) process. Both come
with a functional API and a scikit-learn style estimator wrapper.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .exceptions import AllZeroSample, DegenerateCounts, StateOutOfRange, ValidationError
from .markov_core import (
    ChainDiagnostics,
    TransitionMatrix,
    Trajectory,
    chain_diagnostics,
    stationary_distribution,
    validate_kernel,
)
from .spectral import DEFAULT_K, pseudo_spectral_gap

GAP_FLOOR = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    K: int = DEFAULT_K
    alpha: float = 1.0

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class GapEstimate:
    value: float
    argmax_k: int
    p_hat: TransitionMatrix
    pi_hat: np.ndarray
    n: int


@dataclass(frozen=True)
class ConfidenceSpec:
    """Relative accuracy target for the finite-state estimator.

    ``c_ps`` is the unnamed universal constant of the concentration
    result; confidence levels are only meaningful relative to it.
    """

    epsilon: float
    c_ps: float = 1.0
    alpha_prob: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if not self.c_ps > 0:
            raise ValidationError("c_ps must be > 0")
        if self.alpha_prob is not None and not 0 <= self.alpha_prob <= 1:
            raise ValidationError("alpha_prob must lie in [0, 1]")


def _states_array(traj) -> np.ndarray:
    states = traj.states if isinstance(traj, Trajectory) else traj
    states = np.asarray(states)
    if states.ndim != 1 or states.size == 0:
        raise ValidationError("trajectory must be a non-empty 1-D sequence of states")
    if not np.issubdtype(states.dtype, np.integer):
        if not np.all(np.mod(states, 1) == 0):
            raise ValidationError("states must be integers")
        states = states.astype(np.int64)
    return states


def transition_counts(traj, d: int) -> np.ndarray:
    states = _states_array(traj)
    if states.min() < 0 or states.max() >= d:
        raise StateOutOfRange(f"states must lie in [0, {d}), got range [{states.min()}, {states.max()}]")
    flat = states[:-1] * d + states[1:]
    return np.bincount(flat, minlength=d * d).reshape(d, d).astype(float)


def empirical_transition(traj, d: int, cfg: EstimatorConfig = EstimatorConfig()):
    """Smoothed count estimator ``(N_ij + alpha) / (N_i + alpha d)``.

    Returns the estimated kernel and its stationary distribution.
    """
    N = transition_counts(traj, d)
    rows = N.sum(axis=1)
    if cfg.alpha == 0 and np.any(rows == 0):
        missing = np.flatnonzero(rows == 0).tolist()
        raise DegenerateCounts(f"no observed transitions out of states {missing}; use alpha > 0")
    P_hat = validate_kernel((N + cfg.alpha) / (rows + cfg.alpha * d)[:, None], kernel_id="P_hat")
    return P_hat, stationary_distribution(P_hat)


def estimate_pseudo_spectral_gap(traj, d: int, cfg: EstimatorConfig = EstimatorConfig()) -> GapEstimate:
    """Plug-in pseudo-spectral gap of the smoothed empirical kernel.

    The time reversal is taken with respect to the stationary distribution
    of the smoothed estimate, not the raw occupation frequencies.
    """
    P_hat, pi_hat = empirical_transition(traj, d, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = pseudo_spectral_gap(P_hat, cfg.K, pi=pi_hat)
    value = min(1.0, max(res.value, GAP_FLOOR))
    return GapEstimate(value, res.argmax_k, P_hat, pi_hat, len(_states_array(traj)))


def finite_confidence_alpha(n: int, gamma: float, spec: ConfidenceSpec, diag: ChainDiagnostics, d: int) -> float:
    """Failure probability of the relative-accuracy event, capped at 1.

    ``c_ps d / (eps gamma sqrt(pi_*)) * exp(-n eps^2 gamma^2 pi_* min(gamma, 1/C(P)))``
    """
    if not 0 < gamma <= 1:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    eps = spec.epsilon
    log_pref = math.log(spec.c_ps * d / (eps * gamma * math.sqrt(diag.pi_star)))
    rate = n * eps**2 * gamma**2 * diag.pi_star * min(gamma, 1.0 / diag.c_of_p)
    return math.exp(min(0.0, log_pref - rate))


def ar1_estimate_gap(xs) -> float:
    """``min(1 / mean(x^2), 1)``."""
    x = np.asarray(xs, dtype=float)
    if x.size == 0:
        raise ValidationError("sample must be non-empty")
    ms = float(np.mean(x * x))
    if ms == 0:
        raise AllZeroSample("mean square is zero")
    return min(1.0 / ms, 1.0)


def ar1_confidence_epsilon(n: int, gamma: float, delta: float) -> float:
    """Relative-error radius holding with probability at least ``1 - delta``."""
    if not 0 < gamma <= 1:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    return 24.0 / gamma**1.5 * math.sqrt((9.0 + 4.0 * math.log(1.0 / delta)) / n)


class PseudoSpectralGapEstimator(BaseEstimator):
    """Estimate the pseudo-spectral gap of a finite chain from one path.

    Parameters
    ----------
    n_states : int or None
        Size of the state space. ``None`` infers ``max(X) + 1``.
    K : int, default=20
        Largest power in the truncated maximum.
    alpha : float, default=1.0
        Additive smoothing of the transition counts.

    Attributes
    ----------
    gamma_ : float
    argmax_k_ : int
    transition_matrix_ : ndarray of shape (d, d)
    stationary_distribution_ : ndarray of shape (d,)
    n_samples_ : int
    """

    def __init__(self, n_states=None, K=DEFAULT_K, alpha=1.0):
        self.n_states = n_states
        self.K = K
        self.alpha = alpha

    def fit(self, X, y=None):
        states = column_or_1d(X, warn=True)
        d = int(states.max()) + 1 if self.n_states is None else int(self.n_states)
        est = estimate_pseudo_spectral_gap(states, d, EstimatorConfig(self.K, self.alpha))
        self.estimate_ = est
        self.gamma_ = est.value
        self.argmax_k_ = est.argmax_k
        self.transition_matrix_ = np.asarray(est.p_hat)
        self.stationary_distribution_ = est.pi_hat
        self.n_samples_ = est.n
        self.n_states_ = d
        return self

    def confidence_alpha(self, epsilon, c_ps=1.0):
        """Plug-in failure probability using the fitted kernel's diagnostics."""
        check_is_fitted(self, "gamma_")
        diag = chain_diagnostics(self.transition_matrix_)
        return finite_confidence_alpha(self.n_samples_, self.gamma_, ConfidenceSpec(epsilon, c_ps), diag,
                                       self.n_states_)


class AR1GapEstimator(BaseEstimator):
    """Inverse mean-square estimator of ``1 - a^2`` for a unit-noise AR(1)."""

    def __init__(self, delta=0.05):
        self.delta = delta

    def fit(self, X, y=None):
        x = column_or_1d(X, warn=True)
        self.gamma_ = ar1_estimate_gap(x)
        self.n_samples_ = x.size
        return self

    def radius(self, gamma=None):
        check_is_fitted(self, "gamma_")
        return ar1_confidence_epsilon(self.n_samples_, self.gamma_ if gamma is None else gamma, self.delta)
