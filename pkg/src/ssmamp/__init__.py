"""Matrix-free memory AMP for compressed sensing.

Sufficient-statistic memory AMP (full damping over the effective index
set), the classic BO-OAMP/VAMP recursion, short-memory damping baselines,
their state-evolution trackers, and ground-truth diagnostics, all built
on an FFT-based sensing operator with controllable conditioning.
"""

from .algorithms import (
    Trajectory,
    compute_xi_opt,
    run_bo_mamp_baseline,
    run_oamp_vamp,
    run_ss_bo_mamp,
)
from .denoiser import (
    BernoulliGaussianPrior,
    nle_cross_covariance,
    nle_output_variance,
    orthogonal_nle,
)
from .diagnostics import (
    DiagnosticsReport,
    build_report,
    empirical_covariances,
    orthogonality_residuals,
    sufficiency_gap,
)
from .errors import (
    DegenerateDivergence,
    MissingHistory,
    MonotonicityViolation,
    NonpositiveVariance,
    NoConvergence,
    SSMAMPError,
    SingularAugmentation,
    SingularCovariance,
    SingularSequence,
)
from .lbanded import (
    damping_with_backoff,
    effective_index_set,
    effective_index_update,
    lbanded_determinant,
    lbanded_inverse,
    lbanded_matrix,
    lbanded_quadratic_stats,
    lbandedness_score,
    optimal_damping,
)
from .model import (
    Instance,
    SensingModel,
    SpectralTables,
    build_sensing_model,
    estimate_spectral_moments,
    exact_spectral_moments,
    sample_instance,
    sample_signal,
    tables_from_estimates,
)
from .state_evolution import (
    MemoryAmpRecursion,
    SETrack,
    se_bo_mamp_baseline,
    se_memory_amp,
    se_oamp_vamp,
    se_ss_bo_mamp,
)

__all__ = [
    "Trajectory",
    "compute_xi_opt",
    "run_bo_mamp_baseline",
    "run_oamp_vamp",
    "run_ss_bo_mamp",
    "BernoulliGaussianPrior",
    "nle_cross_covariance",
    "nle_output_variance",
    "orthogonal_nle",
    "DiagnosticsReport",
    "build_report",
    "empirical_covariances",
    "orthogonality_residuals",
    "sufficiency_gap",
    "DegenerateDivergence",
    "MissingHistory",
    "MonotonicityViolation",
    "NonpositiveVariance",
    "NoConvergence",
    "SSMAMPError",
    "SingularAugmentation",
    "SingularCovariance",
    "SingularSequence",
    "damping_with_backoff",
    "effective_index_set",
    "effective_index_update",
    "lbanded_determinant",
    "lbanded_inverse",
    "lbanded_matrix",
    "lbanded_quadratic_stats",
    "lbandedness_score",
    "optimal_damping",
    "Instance",
    "SensingModel",
    "SpectralTables",
    "build_sensing_model",
    "estimate_spectral_moments",
    "exact_spectral_moments",
    "sample_instance",
    "sample_signal",
    "tables_from_estimates",
    "MemoryAmpRecursion",
    "SETrack",
    "se_bo_mamp_baseline",
    "se_memory_amp",
    "se_oamp_vamp",
    "se_ss_bo_mamp",
]

__version__ = "0.1.0"
