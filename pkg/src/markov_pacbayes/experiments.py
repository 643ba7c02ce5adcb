"""Threshold classification on Markov inputs and the simulation protocols.

Predictors are thresholds ``f_theta(u) = 1(u >= theta)`` with
``theta`` in ``0..d-1`` (0-based, so ``theta = 0`` predicts 1 everywhere).
Labels follow ``Y_t | U_t = u ~ Bernoulli(p_u)``; the loss is 0-1.

Sweeps take a ``map_fn`` so the caller decides on parallelism; every cell
derives its own random stream from ``(master_seed, cell key)`` and results
are sorted before they are returned, so output never depends on the
execution order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binomtest
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .estimation import (
    EstimatorConfig,
    ar1_confidence_epsilon,
    ar1_estimate_gap,
    estimate_pseudo_spectral_gap,
)
from .exceptions import DimensionMismatch, MissingLabels, NumericalFailure, ValidationError
from .markov_core import (
    AR1Process,
    KernelLike,
    TransitionMatrix,
    Trajectory,
    as_kernel,
    build_benchmark_kernel,
    interpolate_kernels,
    sample_ar1,
    sample_labels,
    sample_trajectory,
    stationary_distribution,
    validate_kernel,
)
from .pacbayes import BoundParams, bound_finite_erm, bound_finite_erm_empirical
from .spectral import pseudo_spectral_gap

MapFn = Callable


@dataclass(frozen=True)
class LabelModel:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or np.any(p > 1):
            raise ValidationError("label probabilities must be a 1-D array in [0, 1]")
        object.__setattr__(self, "probs", p)

    @classmethod
    def default(cls, d: int) -> "LabelModel":
        """Monotone ``p_u = 0.1 + 0.8 u / (d - 1)`` so a threshold is Bayes-optimal."""
        if d == 1:
            return cls(np.array([0.5]))
        return cls(0.1 + 0.8 * np.arange(d) / (d - 1))

    @property
    def d(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class Scenario:
    kernel: TransitionMatrix
    labels: LabelModel
    loss_cap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", as_kernel(self.kernel))
        if self.kernel.d != self.labels.d:
            raise DimensionMismatch(f"kernel has {self.kernel.d} states, labels {self.labels.d}")

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def thresholds(self) -> range:
        return range(self.d)


@dataclass(frozen=True)
class RiskReport:
    true_risks: np.ndarray
    empirical_risks: np.ndarray
    erm_index: int
    erm_empirical_risk: float
    erm_true_risk: float


@dataclass(frozen=True)
class SweepConfig:
    """Grid and parameters shared by all simulation protocols.

    ``seeds`` are replicate indices; the random stream of each cell is
    derived from ``master_seed`` and the cell coordinates.
    """

    d: int = 20
    n_list: Tuple[int, ...] = (10, 100, 1000, 10000)
    t_list: Tuple[float, ...] = tuple(k / 20 for k in range(21))
    seeds: Tuple[int, ...] = (0,)
    master_seed: int = 0
    estimator: EstimatorConfig = EstimatorConfig()
    delta: Optional[float] = None
    epsilon: float = 0.1
    a: float = 0.1
    replications: int = 100
    p: float = 0.01
    q: float = 0.001
    label_probs: Optional[Tuple[float, ...]] = None
    base_kernel: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if any(not 0 <= t <= 1 for t in self.t_list):
            raise ValidationError("t values must lie in [0, 1]")
        if any(n < 1 for n in self.n_list):
            raise ValidationError("sample sizes must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")

    def require_delta(self) -> float:
        if self.delta is None:
            raise ValidationError("delta has no default; pass it explicitly")
        return self.delta

    def label_model(self) -> LabelModel:
        if self.label_probs is None:
            return LabelModel.default(self.d)
        lm = LabelModel(np.asarray(self.label_probs))
        if lm.d != self.d:
            raise DimensionMismatch(f"{lm.d} label probabilities for d={self.d}")
        return lm


# risks

def predict_threshold(states, theta: int) -> np.ndarray:
    return (np.asarray(states) >= theta).astype(np.int64)


def true_risk_exact(sc: Scenario, theta: int, pi=None) -> float:
    """Stationary 0-1 risk of threshold ``theta``."""
    pi = stationary_distribution(sc.kernel) if pi is None else pi
    p = sc.labels.probs
    below = np.arange(sc.d) < theta
    return float(np.sum(pi[below] * p[below]) + np.sum(pi[~below] * (1.0 - p[~below])))


def true_risks_all(sc: Scenario, pi=None) -> np.ndarray:
    pi = stationary_distribution(sc.kernel) if pi is None else pi
    return np.array([true_risk_exact(sc, th, pi) for th in sc.thresholds])


def _require_labels(traj: Trajectory) -> np.ndarray:
    if traj.labels is None:
        raise MissingLabels("trajectory carries no labels")
    return np.asarray(traj.labels)


def empirical_risk(traj: Trajectory, theta: int) -> float:
    y = _require_labels(traj)
    return float(np.mean(predict_threshold(traj.states, theta) != y))


def empirical_risks_all(states, labels, d: int) -> np.ndarray:
    """Empirical risk of every threshold in one pass over the counts."""
    states = np.asarray(states)
    labels = np.asarray(labels)
    n = states.size
    ones = np.bincount(states, weights=labels, minlength=d)
    tot = np.bincount(states, minlength=d).astype(float)
    zeros = tot - ones
    # theta: errors = ones below theta (predicted 0) + zeros at/above theta (predicted 1)
    ones_below = np.concatenate([[0.0], np.cumsum(ones)[:-1]])
    zeros_above = np.cumsum(zeros[::-1])[::-1]
    return (ones_below + zeros_above) / n


def erm_select(traj: Trajectory, sc: Scenario, pi=None) -> RiskReport:
    """Empirical risk minimizer, ties broken toward the smallest threshold."""
    y = _require_labels(traj)
    emp = empirical_risks_all(traj.states, y, sc.d)
    i = int(np.argmin(emp))
    true = true_risks_all(sc, pi)
    return RiskReport(true, emp, i, float(emp[i]), float(true[i]))


class ThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Empirical risk minimizer over ``1(u >= theta)``, ``theta`` in ``0..n_states-1``."""

    def __init__(self, n_states=None):
        self.n_states = n_states

    def fit(self, X, y):
        states = column_or_1d(X, warn=True).astype(np.int64)
        y = column_or_1d(y, warn=True)
        if states.size != y.size:
            raise DimensionMismatch("X and y have different lengths")
        d = int(states.max()) + 1 if self.n_states is None else int(self.n_states)
        self.empirical_risks_ = empirical_risks_all(states, y, d)
        self.theta_ = int(np.argmin(self.empirical_risks_))
        self.classes_ = np.array([0, 1])
        self.n_states_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        return predict_threshold(column_or_1d(X, warn=True), self.theta_)


def build_pair_kernel(P: KernelLike, labels: LabelModel) -> TransitionMatrix:
    """Kernel of the joint chain ``(U_t, Y_t)``; state ``(u, y)`` has index ``2u + y``."""
    K = np.asarray(as_kernel(P))
    p = labels.probs
    if K.shape[0] != p.size:
        raise DimensionMismatch(f"kernel has {K.shape[0]} states, labels {p.size}")
    emit = np.stack([1.0 - p, p], axis=1).reshape(-1)  # index 2u' + y'
    big = np.repeat(np.repeat(K, 2, axis=0), 2, axis=1) * emit[None, :]
    return validate_kernel(big, kernel_id="pair")


def loss_variance_exact(sc: Scenario, theta: int) -> float:
    """Stationary variance of the 0-1 loss of ``theta`` under the joint chain."""
    pi = stationary_distribution(sc.kernel)
    p = sc.labels.probs
    pred = predict_threshold(np.arange(sc.d), theta)
    pair_pi = np.stack([pi * (1 - p), pi * p], axis=1)  # [u, y]
    loss = (pred[:, None] != np.array([0, 1])[None, :]).astype(float)
    R = float(np.sum(pair_pi * loss))
    V = float(np.sum(pair_pi * (loss - R) ** 2))
    if abs(V - R * (1 - R)) > 1e-10:
        raise NumericalFailure(f"loss variance {V} disagrees with R(1-R) = {R * (1 - R)}")
    return V


# protocols

def _t_key(t: float) -> int:
    return int(round(t * 1_000_000))


def cell_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for one cell, stable under grid extension."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))


@lru_cache(maxsize=64)
def _family(d: int, p: float, q: float, base_kernel):
    if base_kernel is None:
        return build_benchmark_kernel(d, p, q)
    P = validate_kernel(np.asarray(base_kernel), kernel_id="user")
    pi = stationary_distribution(P)
    return P, validate_kernel(np.tile(pi, (P.d, 1)), kernel_id="user-Q")


@lru_cache(maxsize=256)
def _kernel_and_gap(d, p, q, base_kernel, t, K):
    P, Q = _family(d, p, q, base_kernel)
    R = interpolate_kernels(P, Q, t)
    pi = stationary_distribution(R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = pseudo_spectral_gap(R, K, pi=pi)
    return R, pi, g.value


def family_kernel(cfg: SweepConfig, t: float):
    """``(R_t, pi, exact gamma_ps(R_t))`` for the configured family."""
    return _kernel_and_gap(cfg.d, cfg.p, cfg.q, cfg.base_kernel, float(t), cfg.estimator.K)


STREAM_GAP, STREAM_BOUND, STREAM_MSE, STREAM_COVER, STREAM_AR1 = range(5)


def _gap_cell(args):
    cfg, t, n, seed = args
    R, pi, gamma = family_kernel(cfg, t)
    rng = cell_rng(cfg.master_seed, STREAM_GAP, _t_key(t), n, seed)
    traj = sample_trajectory(R, n, init=pi, seed=rng)
    est = estimate_pseudo_spectral_gap(traj, cfg.d, cfg.estimator)
    return {"t": t, "n": n, "seed": seed, "gamma_true": gamma, "gamma_hat": est.value,
            "argmax_k": est.argmax_k}


def _cells(cfg: SweepConfig):
    return [(cfg, float(t), int(n), int(s)) for t in cfg.t_list for n in cfg.n_list for s in cfg.seeds]


def _sorted(rows: List[dict], keys=("t", "n", "seed")) -> List[dict]:
    return sorted(rows, key=lambda r: tuple(r[k] for k in keys))


def run_gap_estimation_sweep(cfg: SweepConfig, map_fn: MapFn = map) -> List[dict]:
    """Exact versus estimated pseudo-spectral gap on one path per ``(t, n, seed)``."""
    return _sorted(list(map_fn(_gap_cell, _cells(cfg))))


def _labeled_path(cfg, R, pi, n, rng):
    traj = sample_trajectory(R, n, init=pi, seed=rng)
    labels = sample_labels(traj.states, cfg.label_model().probs, seed=rng)
    return replace(traj, labels=labels)


def _erm_bounds(cfg, R, pi, gamma, traj):
    sc = Scenario(R, cfg.label_model())
    rep = erm_select(traj, sc, pi)
    n = len(traj)
    params = BoundParams(n=n, delta=cfg.require_delta(), c=sc.loss_cap, epsilon=cfg.epsilon, a=cfg.a)
    gamma_hat = estimate_pseudo_spectral_gap(traj, cfg.d, cfg.estimator).value
    theory = bound_finite_erm(params, gamma, cfg.d, empirical_risk=rep.erm_empirical_risk)
    emp = bound_finite_erm_empirical(params, gamma_hat, cfg.d, empirical_risk=rep.erm_empirical_risk)
    return rep, theory, emp, gamma_hat


def _bound_cell(args):
    cfg, t, n, seed = args
    R, pi, gamma = family_kernel(cfg, t)
    rng = cell_rng(cfg.master_seed, STREAM_BOUND, _t_key(t), n, seed)
    rep, theory, emp, _ = _erm_bounds(cfg, R, pi, gamma, _labeled_path(cfg, R, pi, n, rng))
    return {"t": t, "n": n, "seed": seed, "bound_theory": theory.rhs, "bound_empirical": emp.rhs,
            "risk_true": rep.erm_true_risk, "risk_emp": rep.erm_empirical_risk,
            "valid_theory": theory.valid, "valid_empirical": emp.valid}


def run_bound_sweep(cfg: SweepConfig, map_fn: MapFn = map) -> List[dict]:
    """Theory and empirical finite-class bounds against the exact ERM risk."""
    cfg.require_delta()
    return _sorted(list(map_fn(_bound_cell, _cells(cfg))))


def _mse_cell(args):
    cfg, t, n, j = args
    R, pi, gamma = family_kernel(cfg, t)
    rng = cell_rng(cfg.master_seed, STREAM_MSE, _t_key(t), n, j)
    traj = sample_trajectory(R, n, init=pi, seed=rng)
    return (t, n, j, estimate_pseudo_spectral_gap(traj, cfg.d, cfg.estimator).value - gamma)


def mse_errors(cfg: SweepConfig, map_fn: MapFn = map) -> Dict[Tuple[float, int], np.ndarray]:
    """Per-replication estimation errors keyed by ``(t, n)``, in replication order."""
    if cfg.replications < 2:
        raise ValidationError("the MSE study needs at least 2 replications")
    cells = [(cfg, float(t), int(n), j) for t in cfg.t_list for n in cfg.n_list for j in range(cfg.replications)]
    out: Dict[Tuple[float, int], list] = {}
    for t, n, j, err in sorted(map_fn(_mse_cell, cells)):
        out.setdefault((t, n), []).append(err)
    return {k: np.asarray(v) for k, v in out.items()}


def run_mse_study(cfg: SweepConfig, map_fn: MapFn = map) -> List[dict]:
    """Mean squared error of the gap estimator per ``(t, n)`` over replications."""
    errs = mse_errors(cfg, map_fn)
    return [{"t": t, "n": n, "replications": cfg.replications, "mse": float(np.mean(e**2))}
            for (t, n), e in sorted(errs.items())]


def _cover_cell(args):
    cfg, t, n, j = args
    R, pi, gamma = family_kernel(cfg, t)
    rng = cell_rng(cfg.master_seed, STREAM_COVER, _t_key(t), n, j)
    rep, theory, emp, _ = _erm_bounds(cfg, R, pi, gamma, _labeled_path(cfg, R, pi, n, rng))
    return (t, n, j, rep.erm_true_risk <= theory.rhs, rep.erm_true_risk <= emp.rhs)


def wilson_interval(k: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def run_coverage_study(cfg: SweepConfig, map_fn: MapFn = map) -> List[dict]:
    """Fraction of replications where the exact ERM risk lies below each bound.

    One row per ``(t, n, bound)`` cell with a Wilson 95% interval; cells
    are never pooled.
    """
    delta = cfg.require_delta()
    if cfg.replications < 100:
        raise ValidationError("the coverage study needs at least 100 replications")
    cells = [(cfg, float(t), int(n), j) for t in cfg.t_list for n in cfg.n_list for j in range(cfg.replications)]
    hits: Dict[Tuple[float, int], List[int]] = {}
    for t, n, _, ok_theory, ok_emp in sorted(map_fn(_cover_cell, cells)):
        h = hits.setdefault((t, n), [0, 0])
        h[0] += ok_theory
        h[1] += ok_emp
    rows = []
    for (t, n), (k_theory, k_emp) in sorted(hits.items()):
        for name, k in (("theory", k_theory), ("empirical", k_emp)):
            lo, hi = wilson_interval(k, cfg.replications)
            rows.append({"t": t, "n": n, "bound": name, "delta": delta, "replications": cfg.replications,
                         "coverage": k / cfg.replications, "wilson_lo": lo, "wilson_hi": hi})
    return rows


def _ar1_cell(args):
    a, n, seed, delta, master_seed = args
    rng = cell_rng(master_seed, STREAM_AR1, _t_key(a) + 10**6, n, seed)
    proc = AR1Process(a)
    g_hat = ar1_estimate_gap(sample_ar1(proc, n, seed=rng))
    g = proc.pseudo_spectral_gap
    eps = ar1_confidence_epsilon(n, g, delta)
    return {"a": a, "n": n, "seed": seed, "gamma_true": g, "gamma_hat": g_hat, "eps_radius": eps,
            "within": abs(g_hat / g - 1.0) <= eps}


def run_ar1_study(a_list: Sequence[float], n_list: Sequence[int], seeds: Sequence[int], delta: float,
                  master_seed: int = 0, map_fn: MapFn = map) -> List[dict]:
    """Check the AR(1) relative-error radius on simulated paths."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    for a in a_list:
        AR1Process(a)
    cells = [(float(a), int(n), int(s), delta, master_seed) for a in a_list for n in n_list for s in seeds]
    return _sorted(list(map_fn(_ar1_cell, cells)), keys=("a", "n", "seed"))


def random_pair_check(d_values: Sequence[int] = (2, 3, 4), pairs: int = 25, K: int = 20,
                      seed: int = 0) -> List[dict]:
    """Compare the pseudo-spectral gaps of random kernels and their pair chains."""
    rows = []
    for d in d_values:
        for i in range(pairs):
            rng = cell_rng(seed, 99, d, i)
            P = validate_kernel(rng.dirichlet(np.ones(d), size=d))
            labels = LabelModel(rng.uniform(0.05, 0.95, size=d))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                g = pseudo_spectral_gap(P, K).value
                g_pair = pseudo_spectral_gap(build_pair_kernel(P, labels), K).value
            rows.append({"d": d, "pair": i, "gamma_base": g, "gamma_pair": g_pair, "abs_diff": abs(g - g_pair)})
    return rows
