import math

import numpy as np
import pytest

from markov_pacbayes.exceptions import (
    EmptyGrid,
    EpsilonExceedsGamma,
    LambdaTooLarge,
    MissingMixingInputs,
    SupportViolation,
    ValidationError,
)
from markov_pacbayes.markov_core import build_benchmark_kernel, interpolate_kernels, rank_one_kernel
from markov_pacbayes.pacbayes import (
    BoundParams,
    DiscretePrior,
    LambdaGrid,
    MixingInputs,
    bound_B,
    bound_finite_erm,
    bound_finite_erm_empirical,
    bound_markov,
    bound_markov_empirical,
    bound_rio_general,
    finite_erm_sample_size,
    kl_discrete,
    mixing_rate_constant,
    oracle_bound_rhs,
    phi_coefficients_exact,
    phi_mixing_bound,
    phi_Phi_constant,
    rio_constant,
    select_posterior_rho_hat,
)
from markov_pacbayes.spectral import pseudo_spectral_gap

LOG20 = math.log(20)


def test_kl_discrete():
    assert kl_discrete([0.3, 0.7], [0.3, 0.7]) == 0.0
    dirac = np.eye(20)[4]
    assert kl_discrete(dirac, DiscretePrior.uniform(20)) == pytest.approx(LOG20)
    assert kl_discrete([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3))
    with pytest.raises(SupportViolation):
        kl_discrete([0.5, 0.5], [1.0, 0.0])


def test_bound_markov_hand_terms():
    rep = bound_markov(BoundParams(n=1000, delta=0.05, lam=10), 0.5, LOG20)
    assert rep.terms["variance"] == pytest.approx(20 * 1.002 / 900, rel=1e-12)
    assert rep.terms["kl"] == pytest.approx((LOG20 + math.log(20)) / 5, rel=1e-12)
    assert rep.rhs == pytest.approx(1.22056, rel=1e-5)
    assert rep.two_sided and rep.lower == pytest.approx(-rep.increment)


def test_bound_markov_lambda_limit():
    with pytest.raises(LambdaTooLarge):
        bound_markov(BoundParams(n=1000, delta=0.05, lam=100), 0.5, 1.0)
    with pytest.raises(ValidationError):
        bound_markov(BoundParams(n=1000, delta=0.05), 0.5, 1.0)


def test_bound_markov_monotone():
    p = BoundParams(n=1000, delta=0.05, lam=20)
    g = [bound_markov(p, x, 1.0).rhs for x in (0.1, 0.3, 0.6, 1.0)]
    k = [bound_markov(p, 0.5, x).rhs for x in (0.0, 0.5, 2.0)]
    assert all(a > b for a, b in zip(g, g[1:]))
    assert all(a < b for a, b in zip(k, k[1:]))


def test_bound_markov_empirical_hand_value():
    p = BoundParams(n=1000, delta=0.05, lam=10, epsilon=0.1, a=0.5)
    rep = bound_markov_empirical(p, 0.5, LOG20, alpha_extra=0.01)
    assert rep.rhs == pytest.approx(1.341046, rel=1e-6)
    assert rep.alpha_extra == 0.01 and rep.params.delta == 0.05


def test_empirical_limits_reproduce_theory():
    # with eps = 0 and gamma = 1 the factors 1 + 1/n^(1-a) and 1 + 1/(n gamma) meet as a -> 0
    p = BoundParams(n=1000, delta=0.05, lam=10, epsilon=0.0, a=1e-12)
    emp = bound_markov_empirical(p, 1.0, 2.0).rhs
    assert emp == pytest.approx(bound_markov(p, 1.0, 2.0).rhs, rel=1e-9)


def test_report_terms_sum():
    reps = [
        bound_markov(BoundParams(n=500, delta=0.1, lam=7), 0.3, 1.3, empirical_risk=0.2),
        bound_finite_erm(BoundParams(n=5000, delta=0.1), 0.4, 8, empirical_risk=0.1),
        phi_mixing_bound(BoundParams(n=300, delta=0.1, lam=5), 0.5, 0.2, 0.7),
    ]
    for r in reps:
        assert r.rhs == pytest.approx(sum(r.terms.values()), abs=1e-12)


def test_bound_B_grid_example():
    val, lam = bound_B(3.0, 2.0, LambdaGrid((10.0, 50.0)), BoundParams(n=1000, delta=0.05), L=2)
    assert val == pytest.approx(0.467955, rel=1e-6)
    assert lam == 50.0
    single, lam1 = bound_B(3.0, 2.0, LambdaGrid((10.0,)), BoundParams(n=1000, delta=0.05), L=2)
    assert lam1 == 10.0 and single == pytest.approx(1.360043, rel=1e-6)


def test_bound_B_monotone_in_u_and_errors():
    grid = LambdaGrid.geometric(1000)
    p = BoundParams(n=1000, delta=0.05)
    vals = [bound_B(1.0, u, grid, p)[0] for u in (0.5, 1.0, 2.0, 5.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(EmptyGrid):
        LambdaGrid(())
    with pytest.raises(LambdaTooLarge):
        bound_B(1.0, 1.0, LambdaGrid((10.0, 200.0)), p)


def test_geometric_grid_shape():
    g = LambdaGrid.geometric(1000, 20)
    assert g.L == 20 and g.values[0] == pytest.approx(1.0) and g.values[-1] == pytest.approx(99.0)


def test_posterior_selection_cases():
    p = BoundParams(n=1000, delta=0.05)
    grid = LambdaGrid.geometric(1000)
    flat = select_posterior_rho_hat(np.full(5, 0.3), DiscretePrior.uniform(5), 0.5, p, grid)
    assert flat.family == "gibbs" and flat.beta == 0.0 and np.allclose(flat.rho, 0.2)
    big = BoundParams(n=10**6, delta=0.05)
    risks = np.ones(10)
    risks[3] = 0.0
    sharp = select_posterior_rho_hat(risks, DiscretePrior.uniform(10), 0.5, big, LambdaGrid.geometric(10**6))
    assert sharp.rho[3] > 0.99
    single = select_posterior_rho_hat([0.4], DiscretePrior.uniform(1), 0.5, p, grid)
    assert np.array_equal(single.rho, [1.0])


def test_oracle_bound_rhs():
    grid = LambdaGrid.geometric(1000)
    p = BoundParams(n=1000, delta=0.05)
    relaxed = oracle_bound_rhs(1.0, 0.5, 0.25, grid, p)
    exact = oracle_bound_rhs(1.0, 0.5, 0.25, grid, p, exact=True)
    assert exact <= relaxed
    assert relaxed == pytest.approx(2 * bound_B(1.0, 5.0, grid, p)[0])
    assert oracle_bound_rhs(1.0, 0.5, 0.0, grid, p) == pytest.approx(2 * bound_B(1.0, 2.0, grid, p)[0])
    with pytest.raises(EpsilonExceedsGamma):
        oracle_bound_rhs(1.0, 0.5, 0.5, grid, p)


def test_finite_erm_example_and_condition():
    rep = bound_finite_erm(BoundParams(n=10**4, delta=0.05, epsilon=0.1), 1.0, 20)
    assert rep.increment == pytest.approx(math.sqrt(8 * 1.1 * math.log(400) / 1e4 * 1.0001), rel=1e-12)
    assert rep.lam == pytest.approx(165.0188, rel=1e-5)
    assert not rep.valid and "sample-size" in rep.reason
    need = finite_erm_sample_size(BoundParams(n=10**4, delta=0.05, epsilon=0.1), 1.0, 20)
    ok = bound_finite_erm(BoundParams(n=40_000, delta=0.05, epsilon=0.1), 1.0, 20)
    assert need == pytest.approx(32949.76, rel=1e-6) and ok.valid


def test_finite_erm_M1_and_prior():
    p = BoundParams(n=10**4, delta=0.05)
    one = bound_finite_erm(p, 0.5, 1)
    assert one.increment == pytest.approx(math.sqrt(8 * 1.1 * math.log(20) / (0.5e4) * (1 + 1 / 5000)))
    mu = DiscretePrior(np.array([0.5, 0.25, 0.25]))
    rep = bound_finite_erm(p, 0.5, 3, mu=mu, theta_hat=0)
    assert rep.increment == pytest.approx(bound_finite_erm(p, 0.5, 2).increment)


def test_finite_erm_lambda_op_minimizes_objective():
    p = BoundParams(n=10**4, delta=0.05, epsilon=0.1)
    gamma, M = 0.3, 20
    rep = bound_finite_erm(p, gamma, M)
    corr = 1 + 1 / (gamma * p.n)

    def f(lam):
        return 2 * lam * (1 + p.epsilon) * corr / p.n + math.log(M / p.delta) / (lam * gamma)

    grid = np.linspace(rep.lam * 0.5, rep.lam * 1.5, 10_001)
    assert f(rep.lam) <= min(f(x) for x in grid) * (1 + 1e-9)
    assert f(rep.lam) == pytest.approx(rep.increment, rel=1e-12)


def test_finite_erm_empirical():
    p = BoundParams(n=10**4, delta=0.05, epsilon=0.1, a=0.1)
    rep = bound_finite_erm_empirical(p, 1.0, 20)
    expect = math.sqrt(8 * math.log(400) / 1e4 * 1.21 * (1 + 1 / 1e4**0.9))
    assert rep.increment == pytest.approx(expect, rel=1e-12)
    half = bound_finite_erm_empirical(p, 0.5, 20)
    assert half.increment == pytest.approx(math.sqrt(2) * rep.increment)


def test_phi_coefficients():
    phi = phi_coefficients_exact([[0.75, 0.25], [0.25, 0.75]], 5)
    assert phi[1] == pytest.approx(0.125)
    assert np.allclose(phi, 0.5 ** np.arange(1, 6) / 2)
    assert np.allclose(phi_coefficients_exact(rank_one_kernel([0.2, 0.8]), 4), 0)
    P, Q = build_benchmark_kernel(4)
    seq = phi_coefficients_exact(interpolate_kernels(P, Q, 0.9), 50)
    assert np.all(np.diff(seq) <= 1e-15)


def test_phi_constant_modes():
    assert mixing_rate_constant(0.25) == pytest.approx(0.26507, abs=1e-5)
    p = BoundParams(n=50, delta=0.05, c=2.0)
    assert phi_Phi_constant(p, phi=np.zeros(50)) == pytest.approx(4.0)
    with pytest.raises(MissingMixingInputs):
        phi_Phi_constant(p)


def test_exact_phi_constant_below_gap_mode_on_benchmark_family():
    P, Q = build_benchmark_kernel(4)
    p = BoundParams(n=200, delta=0.05)
    for t in (0.0, 0.3, 0.6, 0.9):
        R = interpolate_kernels(P, Q, t)
        gamma = pseudo_spectral_gap(R).value
        pi_star = 1 / 552
        exact = phi_Phi_constant(p, phi=phi_coefficients_exact(R, p.n))
        assert exact <= phi_Phi_constant(p, gamma=gamma, pi_star=pi_star) + 1e-12


def test_phi_mixing_bound_hand_value():
    p = BoundParams(n=1000, delta=0.05, lam=10)
    b = 1 / (math.log(4) + 2 * math.log(2) + 1)
    rho = 0.5 ** (b * 0.75)
    assert rho == pytest.approx(0.87128, abs=1e-5)
    ratio_sq = ((1 - rho**1001) / (1 - rho)) ** 2
    rep = phi_mixing_bound(p, 0.75, 0.25, LOG20)
    assert rep.terms["variance"] == pytest.approx(10 * ratio_sq / 8000, rel=1e-12)
    assert rep.terms["kl"] == pytest.approx(0.59915, abs=1e-5)
    worse = phi_mixing_bound(p, 0.5, 0.25, LOG20)
    assert worse.increment >= rep.increment


def test_rio_constant_cases():
    n = 4
    indep = MixingInputs(np.ones(n), gamma_matrix=np.zeros((n, n)))
    assert rio_constant(indep) == pytest.approx(1.0)
    rank_one = MixingInputs(np.ones(n), phi=np.zeros(n - 1))
    assert rio_constant(rank_one) == pytest.approx(1.0)
    # 2-state p=0.25: phi(k) = 0.5^k / 2; hand sum over t = 1..4
    two = MixingInputs(np.ones(n), phi=0.5 ** np.arange(1, n) / 2)
    assert rio_constant(two) == pytest.approx((1.875**2 + 1.75**2 + 1.5**2 + 1.0) / 4)
    with pytest.raises(MissingMixingInputs):
        rio_constant(MixingInputs(np.ones(n)))


def test_rio_phi_and_matrix_modes_agree():
    n = 6
    phi = 0.6 ** np.arange(1, n)
    D = np.linspace(0.5, 1.0, n)
    G = np.zeros((n, n))
    for t in range(n):
        for m in range(t + 1, n):
            G[t, m] = D[t] * phi[m - t - 1]
    assert rio_constant(MixingInputs(D, phi=phi)) == pytest.approx(rio_constant(MixingInputs(D, gamma_matrix=G)))
    rep = bound_rio_general(BoundParams(n=n, delta=0.05, lam=2), MixingInputs(D, phi=phi), 0.5)
    assert rep.extras["C2"] == pytest.approx(rio_constant(MixingInputs(D, phi=phi)))
