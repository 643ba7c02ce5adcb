"""PAC-Bayes bound calculators for Markov-dependent samples.

Every calculator returns a :class:`BoundReport` whose ``rhs`` is the
empirical-risk term plus the variance and KL terms. With the default
``empirical_risk=0`` the ``rhs`` is the increment over the empirical risk.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import (
    EmptyGrid,
    EpsilonExceedsGamma,
    LambdaTooLarge,
    MissingMixingInputs,
    SupportViolation,
    ValidationError,
)
from .markov_core import KernelLike, as_kernel, check_distribution, stationary_distribution

DEFAULT_BETAS = tuple(np.logspace(-2, 4, 50))


@dataclass(frozen=True)
class BoundParams:
    """Shared bound inputs.

    ``lam`` is the free temperature (``lambda``); ``epsilon`` and ``a``
    only matter for the empirical variants.
    """

    n: int
    delta: float
    c: float = 1.0
    lam: Optional[float] = None
    epsilon: float = 0.1
    a: float = 0.1

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not 0 < self.delta < 1:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c > 0:
            raise ValidationError(f"c must be > 0, got {self.c}")
        if self.lam is not None and not self.lam > 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.a < 1:
            raise ValidationError(f"a must lie in (0, 1), got {self.a}")

    def require_lambda(self) -> float:
        if self.lam is None:
            raise ValidationError("this bound needs lambda")
        return self.lam


@dataclass(frozen=True)
class LambdaGrid:
    values: Tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise EmptyGrid("lambda grid is empty")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValidationError("lambda grid must be positive and strictly increasing")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @property
    def L(self) -> int:
        return len(self.values)

    @classmethod
    def geometric(cls, n: int, L: int = 20) -> "LambdaGrid":
        """``L`` geometric points from 1 up to ``0.99 n / 10``."""
        hi = 0.99 * n / 10
        lo = min(1.0, hi / 2)
        return cls(tuple(np.geomspace(lo, hi, L)))


@dataclass(frozen=True)
class DiscretePrior:
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", check_distribution(self.weights, name="prior"))

    @classmethod
    def uniform(cls, M: int) -> "DiscretePrior":
        return cls(np.full(M, 1.0 / M))

    @property
    def M(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class MixingInputs:
    """Dependence coefficients for the Hoeffding-type bound.

    ``gamma_matrix[t, m]`` (0-based, used for ``m > t``) or ``phi[k-1] = phi(k)``.
    """

    deltas: np.ndarray
    gamma_matrix: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        if deltas.ndim != 1 or np.any(deltas <= 0):
            raise ValidationError("diameters must be a positive 1-D array")
        object.__setattr__(self, "deltas", deltas)
        if self.gamma_matrix is not None:
            G = np.asarray(self.gamma_matrix, dtype=float)
            if G.shape != (deltas.size, deltas.size) or np.any(G < 0):
                raise ValidationError("gamma_matrix must be a nonnegative n x n array")
            object.__setattr__(self, "gamma_matrix", G)
        if self.phi is not None:
            phi = np.asarray(self.phi, dtype=float)
            if np.any(phi < 0) or np.any(np.diff(phi) > 1e-12):
                raise ValidationError("phi must be nonnegative and nonincreasing")
            object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class BoundReport:
    formula: str
    rhs: float
    terms: Dict[str, float]
    params: BoundParams
    gamma_used: Optional[float]
    empirical_flag: bool
    valid: bool = True
    reason: str = ""
    lam: Optional[float] = None
    alpha_extra: Optional[float] = None
    two_sided: bool = False
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def increment(self) -> float:
        return self.terms["variance"] + self.terms["kl"]

    @property
    def lower(self) -> Optional[float]:
        """Lower confidence limit for the true risk, when the reversed bound holds."""
        return self.terms["empirical_risk"] - self.increment if self.two_sided else None

    def to_record(self) -> dict:
        rec = {
            "formula": self.formula,
            "rhs": self.rhs,
            "term_emp": self.terms["empirical_risk"],
            "term_var": self.terms["variance"],
            "term_kl": self.terms["kl"],
            "lambda": self.lam,
            "gamma_used": self.gamma_used,
            "delta": self.params.delta,
            "alpha_extra": self.alpha_extra,
            "valid": self.valid,
            "reason": self.reason,
        }
        if self.two_sided:
            rec["lower"] = self.lower
        rec.update(self.extras)
        rec["params"] = asdict(self.params)
        return rec


def _report(formula, emp, var, kl_term, params, gamma, empirical, **kw) -> BoundReport:
    terms = {"empirical_risk": float(emp), "variance": float(var), "kl": float(kl_term)}
    return BoundReport(formula, terms["empirical_risk"] + terms["variance"] + terms["kl"], terms, params,
                       None if gamma is None else float(gamma), empirical, **kw)


def _check_gamma(gamma, name="gamma"):
    if not gamma > 0:
        raise ValidationError(f"{name} must be > 0, got {gamma}")


def _check_lambda(lam, n):
    if lam >= n / 10:
        raise LambdaTooLarge(f"lambda={lam} must be < n/10 = {n / 10}")


def kl_discrete(rho, mu) -> float:
    """``KL(rho || mu)`` for distributions on a finite set, with ``0 log 0 = 0``."""
    rho = check_distribution(rho, name="rho")
    mu = mu.weights if isinstance(mu, DiscretePrior) else check_distribution(mu, rho.size, "mu")
    if rho.size != mu.size:
        raise ValidationError("rho and mu have different sizes")
    s = rho > 0
    if np.any(mu[s] == 0):
        raise SupportViolation("rho puts mass where the prior has none")
    return float(max(0.0, np.sum(rho[s] * np.log(rho[s] / mu[s]))))


def _variance_term(lam, c, n, factor):
    return 2.0 * lam * c * c * factor / (n - 10.0 * lam)


def bound_markov(p: BoundParams, gamma: float, kl: float, empirical_risk: float = 0.0) -> BoundReport:
    """Bernstein-type bound with the true pseudo-spectral gap.

    The same increment also bounds ``r - R`` (reversed direction), so the
    report is flagged two-sided.
    """
    lam = p.require_lambda()
    _check_lambda(lam, p.n)
    _check_gamma(gamma)
    var = _variance_term(lam, p.c, p.n, 1.0 + 1.0 / (p.n * gamma))
    kl_term = (kl + math.log(1.0 / p.delta)) / (lam * gamma)
    return _report("markov", empirical_risk, var, kl_term, p, gamma, False, lam=lam, two_sided=True)


def bound_markov_empirical(p: BoundParams, gamma_hat: float, kl: float, empirical_risk: float = 0.0,
                           alpha_extra: Optional[float] = None) -> BoundReport:
    """Bound with an estimated gap; holds with probability ``1 - delta - alpha``.

    ``alpha_extra`` is the estimator's failure probability, reported
    separately and never folded into ``delta``.
    """
    lam = p.require_lambda()
    _check_lambda(lam, p.n)
    _check_gamma(gamma_hat, "gamma_hat")
    var = _variance_term(lam, p.c, p.n, 1.0 + 1.0 / p.n ** (1.0 - p.a))
    kl_term = (kl + math.log(1.0 / p.delta)) * (1.0 + p.epsilon) / (lam * gamma_hat)
    reason = f"needs n >= gamma_ps^(-1/a) = gamma_ps^(-{1 / p.a:g})"
    return _report("markov-empirical", empirical_risk, var, kl_term, p, gamma_hat, True, lam=lam,
                   alpha_extra=alpha_extra, two_sided=True, reason=reason)


def _B_values(kl, u, lams, p: BoundParams, L: int) -> np.ndarray:
    n, c = p.n, p.c
    return 2 * lams * c * c * (1 + u / n) / (n - 10 * lams) + u * (kl + math.log(L / p.delta)) / lams


def bound_B(kl: float, u: float, grid: LambdaGrid, p: BoundParams, L: Optional[int] = None):
    """Grid-minimized bound ``B(nu, u)``; returns ``(value, lambda)``.

    ``L`` defaults to the grid size (union bound over the grid).
    """
    lams = np.asarray(grid.values)
    if lams.size == 0:
        raise EmptyGrid("lambda grid is empty")
    if lams[-1] >= p.n / 10:
        raise LambdaTooLarge(f"grid value {lams[-1]} must be < n/10 = {p.n / 10}")
    if not u > 0:
        raise ValidationError(f"u must be > 0, got {u}")
    vals = _B_values(kl, u, lams, p, grid.L if L is None else L)
    i = int(np.argmin(vals))
    return float(vals[i]), float(lams[i])


@dataclass(frozen=True)
class PosteriorChoice:
    rho: np.ndarray
    objective: float
    family: str
    beta: Optional[float]
    theta: Optional[int]
    lam: float
    kl: float


def gibbs_posterior(risks, mu, beta: float) -> np.ndarray:
    """``rho_beta(theta)`` proportional to ``mu(theta) exp(-beta r(theta))``."""
    risks = np.asarray(risks, dtype=float)
    w = mu.weights if isinstance(mu, DiscretePrior) else np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.log(w) - beta * risks
    return np.exp(logw - logsumexp(logw))


def select_posterior_rho_hat(risks, mu, gamma_hat: float, p: BoundParams, grid: LambdaGrid,
                             betas: Sequence[float] = DEFAULT_BETAS) -> PosteriorChoice:
    """Minimize ``E_rho[r] + B(rho, (1 + eps) / gamma_hat)`` over a candidate family.

    Candidates are Gibbs posteriors on ``{0} U betas`` followed by every
    Dirac mass; ties keep the earliest candidate (smaller beta first).
    """
    risks = np.asarray(risks, dtype=float)
    if not np.all(np.isfinite(risks)):
        raise ValidationError("risks must be finite")
    mu = mu if isinstance(mu, DiscretePrior) else DiscretePrior(mu)
    if mu.M != risks.size:
        raise ValidationError("prior and risks have different sizes")
    _check_gamma(gamma_hat, "gamma_hat")
    u = (1.0 + p.epsilon) / gamma_hat
    best = None

    def consider(rho, family, beta, theta):
        nonlocal best
        kl = kl_discrete(rho, mu)
        val, lam = bound_B(kl, u, grid, p)
        obj = float(rho @ risks) + val
        # candidates within rounding of the incumbent count as ties
        if best is None or obj < best.objective - 1e-12 * max(1.0, abs(best.objective)):
            best = PosteriorChoice(rho, obj, family, beta, theta, lam, kl)

    for beta in (0.0, *sorted(betas)):
        consider(gibbs_posterior(risks, mu, beta), "gibbs", float(beta), None)
    for theta in np.flatnonzero(mu.weights > 0):
        rho = np.zeros(mu.M)
        rho[theta] = 1.0
        consider(rho, "dirac", None, int(theta))
    return best


def oracle_bound_rhs(kl: float, gamma: float, epsilon: float, grid: LambdaGrid, p: BoundParams,
                     exact: bool = False) -> float:
    """Excess-risk term of the oracle inequality for the selected posterior.

    Relaxed form ``2 B(rho, (1+eps)/(gamma-eps))``; ``exact=True`` keeps
    ``B(rho, 1/gamma) + B(rho, (1+eps)/(gamma-eps))``.
    """
    if not 0 <= epsilon < gamma:
        raise EpsilonExceedsGamma(f"need 0 <= epsilon < gamma, got epsilon={epsilon}, gamma={gamma}")
    u = (1.0 + epsilon) / (gamma - epsilon)
    relaxed, _ = bound_B(kl, u, grid, p)
    if not exact:
        return 2.0 * relaxed
    return bound_B(kl, 1.0 / gamma, grid, p)[0] + relaxed


def _log_term(M, delta, prior_mass):
    if prior_mass is None:
        return math.log(M / delta)
    if not 0 < prior_mass <= 1:
        raise ValidationError("prior mass of the selected predictor must lie in (0, 1]")
    return math.log(1.0 / (prior_mass * delta))


def finite_erm_sample_size(p: BoundParams, gamma: float, M: int, prior_mass: Optional[float] = None) -> float:
    """Right side of the sample-size condition ``n > ...`` for the finite-class bound."""
    lt = _log_term(M, p.delta, prior_mass)
    eps = p.epsilon
    if eps == 0:
        return math.inf
    return 50 * (1 + eps) * lt / (eps**2 * p.c**2 * gamma * (1 + 1 / (gamma * p.n)))


def bound_finite_erm(p: BoundParams, gamma: float, M: int, mu: Optional[DiscretePrior] = None,
                     theta_hat: Optional[int] = None, empirical_risk: float = 0.0) -> BoundReport:
    """Generalization bound for the empirical risk minimizer over ``M`` predictors.

    The increment ``sqrt(8 (1+eps) c^2 log(M/delta) / (gamma n) (1 + 1/(gamma n)))``
    is split evenly between the variance and KL terms (they are equal at the
    optimal lambda, reported as ``lam``). A non-uniform prior replaces
    ``log(M/delta)`` by ``log(1/(mu(theta_hat) delta))``. When the sample-size
    condition fails, the value is still returned with ``valid=False``.
    """
    _check_gamma(gamma)
    if M < 1:
        raise ValidationError("M must be >= 1")
    prior_mass = None
    if mu is not None:
        if theta_hat is None:
            raise ValidationError("a non-uniform prior needs theta_hat")
        prior_mass = float(mu.weights[theta_hat])
    lt = _log_term(M, p.delta, prior_mass)
    n, c, eps = p.n, p.c, p.epsilon
    corr = 1.0 + 1.0 / (gamma * n)
    inc = math.sqrt(8 * (1 + eps) * c * c * lt / (gamma * n) * corr)
    lam_op = math.sqrt(n * lt / (2 * (1 + eps) * c * c * gamma * corr)) if lt > 0 else 0.0
    need = finite_erm_sample_size(p, gamma, M, prior_mass)
    valid = n > need
    reason = "" if valid else f"sample-size condition violated: n={n} <= {need:.6g}"
    return _report("finite-erm", empirical_risk, inc / 2, inc / 2, p, gamma, False, valid=valid,
                   reason=reason, lam=lam_op, extras={"n_required": need})


def bound_finite_erm_empirical(p: BoundParams, gamma_hat: float, M: int, empirical_risk: float = 0.0,
                               prior_mass: Optional[float] = None,
                               alpha_extra: Optional[float] = None) -> BoundReport:
    """Finite-class bound with an estimated gap.

    ``sqrt(8 c^2 log(M/delta) / (gamma_hat n) (1+eps)^2 (1 + 1/n^(1-a)))``,
    holding with probability ``1 - delta - alpha``.
    """
    _check_gamma(gamma_hat, "gamma_hat")
    if M < 1:
        raise ValidationError("M must be >= 1")
    lt = _log_term(M, p.delta, prior_mass)
    n, c, eps = p.n, p.c, p.epsilon
    corr = 1.0 + 1.0 / n ** (1.0 - p.a)
    inc = math.sqrt(8 * c * c * lt / (gamma_hat * n) * (1 + eps) ** 2 * corr)
    lam_op = math.sqrt(n * lt / (2 * c * c * gamma_hat * corr)) if lt > 0 else 0.0
    return _report("finite-erm-empirical", empirical_risk, inc / 2, inc / 2, p, gamma_hat, True, lam=lam_op,
                   alpha_extra=alpha_extra, reason=f"needs n >= gamma_ps^(-1/a) = gamma_ps^(-{1 / p.a:g})")


def phi_coefficients_exact(P: KernelLike, k_max: int) -> np.ndarray:
    """``phi(k) = max_u TV(P^k(u, .), pi)`` for ``k = 1..k_max``."""
    K = as_kernel(P)
    pi = stationary_distribution(K)
    M = np.asarray(K)
    out = np.empty(k_max)
    Pk = M.copy()
    for k in range(k_max):
        out[k] = 0.5 * np.abs(Pk - pi).sum(axis=1).max()
        Pk = Pk @ M
    return out


def mixing_rate_constant(pi_star: float) -> float:
    """``b(pi_*) = 1 / (ln(1/pi_*) + 2 ln 2 + 1)``."""
    if not 0 < pi_star <= 1:
        raise ValidationError(f"pi_star must lie in (0, 1], got {pi_star}")
    return 1.0 / (math.log(1.0 / pi_star) + 2 * math.log(2.0) + 1.0)


def _geometric_ratio_sq(n, gamma, pi_star):
    rho = 0.5 ** (mixing_rate_constant(pi_star) * gamma)
    if rho == 0.0:
        return 1.0
    return ((1.0 - rho ** (n + 1)) / (1.0 - rho)) ** 2


def phi_Phi_constant(p: BoundParams, phi=None, gamma: Optional[float] = None,
                     pi_star: Optional[float] = None) -> float:
    """The dependence constant ``Phi`` with ``Delta_t = c``.

    Pass ``phi`` (``phi(1), phi(2), ...``) for the exact sum, or ``gamma``
    and ``pi_star`` for the geometric upper bound.
    """
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        if phi.size < p.n:
            if phi.size and phi[-1] != 0.0:
                raise ValidationError(f"need phi(1..n) with n={p.n}, got {phi.size} values")
            phi = np.concatenate([phi, np.zeros(p.n - phi.size)])
        return p.c**2 * (1.0 + 2.0 * phi[: p.n].sum()) ** 2
    if gamma is None or pi_star is None:
        raise MissingMixingInputs("pass either phi or (gamma, pi_star)")
    _check_gamma(gamma)
    return p.c**2 * _geometric_ratio_sq(p.n, gamma, pi_star)


def phi_mixing_bound(p: BoundParams, gamma: float, pi_star: float, kl: float,
                     empirical_risk: float = 0.0) -> BoundReport:
    """Hoeffding-type bound for finite chains, with phi-mixing controlled by the gap."""
    lam = p.require_lambda()
    _check_gamma(gamma)
    var = lam * phi_Phi_constant(p, gamma=gamma, pi_star=pi_star) / (8.0 * p.n)
    kl_term = (kl + math.log(1.0 / p.delta)) / lam
    return _report("phi-mixing", empirical_risk, var, kl_term, p, gamma, False, lam=lam,
                   extras={"b_pi_star": mixing_rate_constant(pi_star)})


def rio_constant(mix: MixingInputs) -> float:
    """``C^2 = (1/n) sum_t (Delta_t + 2 sum_{m>t} gamma_{t,m})^2``."""
    D = mix.deltas
    n = D.size
    if mix.gamma_matrix is not None:
        tail = np.triu(mix.gamma_matrix, k=1).sum(axis=1)
    elif mix.phi is not None:
        phi = mix.phi
        if phi.size < n - 1:
            raise ValidationError(f"need phi(1..{n - 1}), got {phi.size} values")
        cum = np.concatenate([[0.0], np.cumsum(phi[: max(n - 1, 0)])])
        # sum_{m=t+1}^{n} phi(m - t) = phi(1) + ... + phi(n - t) for 1-based t
        tail = D * cum[n - 1 - np.arange(n)]
    else:
        raise MissingMixingInputs("supply gamma_matrix or phi")
    return float(np.mean((D + 2.0 * tail) ** 2))


def bound_rio_general(p: BoundParams, mix: MixingInputs, kl: float, empirical_risk: float = 0.0) -> BoundReport:
    """Hoeffding-type bound from user-supplied dependence coefficients."""
    lam = p.require_lambda()
    if mix.deltas.size != p.n:
        raise ValidationError(f"need {p.n} diameters, got {mix.deltas.size}")
    C2 = rio_constant(mix)
    var = lam * C2 / (8.0 * p.n)
    kl_term = (kl + math.log(1.0 / p.delta)) / lam
    return _report("rio", empirical_risk, var, kl_term, p, None, False, lam=lam, extras={"C2": C2})
