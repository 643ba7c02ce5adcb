"""PAC-Bayes bounds for Markov-dependent data, built around the pseudo-spectral gap."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

from .estimation import (
    AR1GapEstimator,
    EstimatorConfig,
    GapEstimate,
    PseudoSpectralGapEstimator,
    ar1_confidence_epsilon,
    ar1_estimate_gap,
    empirical_transition,
    estimate_pseudo_spectral_gap,
    finite_confidence_alpha,
)
from .markov_core import (
    AR1Process,
    TransitionMatrix,
    Trajectory,
    build_benchmark_kernel,
    chain_diagnostics,
    interpolate_kernels,
    mixing_time,
    sample_trajectory,
    stationary_distribution,
    validate_kernel,
)
from .spectral import pseudo_spectral_gap, spectral_gap_reversible, time_reversal

__all__ = [
    "AR1GapEstimator",
    "AR1Process",
    "EstimatorConfig",
    "GapEstimate",
    "PseudoSpectralGapEstimator",
    "TransitionMatrix",
    "Trajectory",
    "ar1_confidence_epsilon",
    "ar1_estimate_gap",
    "build_benchmark_kernel",
    "chain_diagnostics",
    "empirical_transition",
    "estimate_pseudo_spectral_gap",
    "finite_confidence_alpha",
    "interpolate_kernels",
    "mixing_time",
    "pseudo_spectral_gap",
    "sample_trajectory",
    "spectral_gap_reversible",
    "stationary_distribution",
    "time_reversal",
    "validate_kernel",
]
