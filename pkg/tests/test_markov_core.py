import math

import numpy as np
import pytest

from markov_pacbayes.exceptions import (
    DimensionMismatch,
    DTooSmall,
    EmptyMatrix,
    NegativeEntry,
    NonUniqueStationary,
    RowSumViolation,
    TOutOfRange,
    ValidationError,
    ZeroLength,
)
from markov_pacbayes.markov_core import (
    AR1Process,
    build_benchmark_kernel,
    chain_diagnostics,
    default_k_max,
    interpolate_kernels,
    is_primitive,
    mixing_time,
    rank_one_kernel,
    sample_ar1,
    sample_labels,
    sample_trajectory,
    stationary_distribution,
    tv_distance,
    validate_kernel,
)


def test_validate_kernel_accepts_and_freezes():
    P = validate_kernel([[0.5, 0.5], [0.2, 0.8]])
    assert P.d == 2
    with pytest.raises(ValueError):
        np.asarray(P)[0, 0] = 1.0


def test_validate_kernel_renormalizes_small_drift_only():
    exact = np.array([[0.3, 0.7], [0.6, 0.4]])
    assert np.array_equal(np.asarray(validate_kernel(exact)), exact)
    drift = exact.copy()
    drift[0, 0] += 5e-10
    fixed = np.asarray(validate_kernel(drift))
    assert np.allclose(fixed.sum(axis=1), 1.0, atol=1e-15)
    drift[0, 0] += 1e-6
    with pytest.raises(RowSumViolation):
        validate_kernel(drift)


@pytest.mark.parametrize("bad, exc", [
    ([], EmptyMatrix),
    ([[0.5, 0.5]], DimensionMismatch),
    ([[1.2, -0.2], [0.5, 0.5]], NegativeEntry),
    ([[0.5, 0.6], [0.5, 0.5]], RowSumViolation),
])
def test_validate_kernel_errors(bad, exc):
    with pytest.raises(exc):
        validate_kernel(bad)


def test_stationary_two_state_closed_form():
    a, b = 0.3, 0.1
    pi = stationary_distribution([[1 - a, a], [b, 1 - b]])
    assert np.allclose(pi, [b / (a + b), a / (a + b)], atol=1e-14)


def test_stationary_periodic_chain_is_unique():
    pi = stationary_distribution([[0, 1], [1, 0]])
    assert np.allclose(pi, [0.5, 0.5])


def test_stationary_identity_is_not_unique():
    with pytest.raises(NonUniqueStationary):
        stationary_distribution(np.eye(3))


def test_stationary_random_kernels_residual():
    rng = np.random.default_rng(0)
    for d in (2, 5, 30):
        P = rng.dirichlet(np.ones(d), size=d)
        pi = stationary_distribution(P)
        assert abs(pi.sum() - 1) < 1e-12
        assert np.abs(pi @ P - pi).sum() < 1e-10


def test_benchmark_stationary_matches_hand_solution():
    # states 0 and 1 share the uniform rows; solve the 4-state balance by hand
    P, Q = build_benchmark_kernel(4, 0.01, 0.001)
    pi = stationary_distribution(P)
    # pi2 * p = pi0 / 4 * 4 ... reduced: pi0 = pi1, pi2 = 50 pi0, pi3 = 500 pi0
    expect = np.array([1, 1, 50, 500]) / 552
    assert np.allclose(pi, expect, atol=1e-14)
    assert np.allclose(np.asarray(Q), np.tile(expect, (4, 1)))


def test_benchmark_requires_d4():
    with pytest.raises(DTooSmall):
        build_benchmark_kernel(3)


def test_benchmark_larger_d_rows():
    P, _ = build_benchmark_kernel(6)
    M = np.asarray(P)
    assert np.allclose(M[[0, 1, 4, 5]], 1 / 6)
    assert M[2, 0] == 0.01 and M[3, 1] == 0.001


def test_interpolation_endpoints_and_stationarity():
    P, Q = build_benchmark_kernel(5)
    assert np.array_equal(np.asarray(interpolate_kernels(P, Q, 1.0)), np.asarray(P))
    assert np.array_equal(np.asarray(interpolate_kernels(P, Q, 0.0)), np.asarray(Q))
    pi = stationary_distribution(P)
    R = np.asarray(interpolate_kernels(P, Q, 0.37))
    assert np.abs(pi @ R - pi).sum() < 1e-12
    with pytest.raises(TOutOfRange):
        interpolate_kernels(P, Q, 1.5)


def test_sample_trajectory_reproducible_and_frequencies():
    P = validate_kernel([[0.9, 0.1], [0.3, 0.7]])
    a = sample_trajectory(P, 1000, seed=5)
    b = sample_trajectory(P, 1000, seed=5)
    assert np.array_equal(a.states, b.states)
    long = sample_trajectory(P, 200_000, seed=1)
    freq = np.bincount(long.states, minlength=2) / len(long)
    assert np.allclose(freq, [0.75, 0.25], atol=0.01)
    with pytest.raises(ZeroLength):
        sample_trajectory(P, 0)


def test_sample_trajectory_transition_counts_converge():
    P = validate_kernel([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
    s = sample_trajectory(P, 100_000, seed=2).states
    N = np.zeros((3, 3))
    np.add.at(N, (s[:-1], s[1:]), 1)
    assert np.allclose(N / N.sum(axis=1, keepdims=True), np.asarray(P), atol=0.01)


def test_sample_labels_rates():
    states = np.repeat([0, 1], 50_000)
    y = sample_labels(states, [0.1, 0.8], seed=0)
    assert abs(y[:50_000].mean() - 0.1) < 0.01
    assert abs(y[50_000:].mean() - 0.8) < 0.01


def test_ar1_process_identities():
    proc = AR1Process(0.6)
    assert proc.pseudo_spectral_gap == pytest.approx(0.64)
    assert proc.variance == pytest.approx(1 / 0.64)
    with pytest.raises(ValidationError):
        AR1Process(1.0)


def test_sample_ar1_moments():
    x = sample_ar1(AR1Process(0.6), 400_000, seed=0)
    assert np.var(x) == pytest.approx(1 / 0.64, rel=0.02)
    assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.6, abs=0.01)


def test_tv_distance():
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([0.2, 0.8], [0.6, 0.4]) == pytest.approx(0.4)


def test_mixing_time_two_state_closed_form():
    # symmetric flip probability a: worst TV distance after k steps is |1 - 2a|^k / 2
    a = 0.1
    P = validate_kernel([[1 - a, a], [a, 1 - a]])
    expect = next(k for k in range(1, 100) if 0.5 * 0.8**k <= 0.25)
    assert mixing_time(P) == expect


def test_mixing_time_rank_one_and_reducible():
    assert mixing_time(rank_one_kernel([0.2, 0.3, 0.5])) == 1
    assert mixing_time(np.eye(2)) == math.inf
    assert mixing_time([[0, 1], [1, 0]]) == math.inf
    with pytest.raises(NonUniqueStationary):
        mixing_time(np.eye(2), eps=0.6)


def test_default_k_max():
    assert default_k_max(2) == 40
    assert default_k_max(10**4) == 10**6


def test_primitivity_and_diagnostics():
    assert not is_primitive([[0, 1], [1, 0]])
    assert is_primitive([[0.5, 0.5], [1, 0]])
    diag = chain_diagnostics([[0.5, 0.5], [0.25, 0.75]])
    assert diag.pi_star == pytest.approx(1 / 3)
    assert diag.p_norm == pytest.approx(2.0)
    assert diag.c_of_p == pytest.approx(4.0)
    assert diag.ergodic_flag
