"""Heat-bath Glauber dynamics of the 2D discrete Gaussian free field.

A numpy/scipy toolkit for simulating the dynamics on a square box with
zero (or harmonic-shift) boundary data, together with exact verification
machinery: the backwards-in-time random walk representation, quenched
heat kernels and covariances, sticky/identity/two-stage couplings of two
chains, and mixing-time experiments (mean decay, survival asymptotics,
coalescence scaling, cutoff profile).
"""

from .lattice import LatticeBox, HeightField, build_box, neighbors, harmonic_extension
from .spectral import (
    SpectralData,
    GreensMatrix,
    lambda_1,
    eigenpair,
    eigenbasis,
    phi_1,
    phi_1_sum,
    phi_hat_1,
    greens_matrix,
    greens_column,
    transition_matrix,
    dirichlet_laplacian,
    survival_prediction,
    t_star,
)
from .dynamics import (
    UpdateSchedule,
    Trajectory,
    sample_schedule,
    run_forward,
    heat_flow,
    sample_stationary,
)
from .btrw import (
    BtrwTrajectory,
    PropagatorBundle,
    sample_btrw,
    backward_propagate,
    quenched_mean,
    quenched_covariance,
    covariance_gap_check,
    representation_check,
    survival_experiment,
)
from .coupling import (
    StickyDraw,
    CoupledTrace,
    CoalescenceRecord,
    TwoStageParams,
    sticky_gaussian,
    sticky_gaussian_batch,
    dominated_bernoulli_check,
    step_coupled,
    run_coupled,
    run_two_stage,
    supermartingale_drift_check,
    angle_bracket_rate,
)
from .experiments import (
    ProfilePoint,
    mean_decay_study,
    shifted_stationary_init,
    cutoff_profile_study,
    coalescence_scaling_study,
    profile_prediction,
)
from .seeding import derive_seed, rng_for

__version__ = "0.1.0"

__all__ = [
    "LatticeBox",
    "HeightField",
    "build_box",
    "neighbors",
    "harmonic_extension",
    "SpectralData",
    "GreensMatrix",
    "lambda_1",
    "eigenpair",
    "eigenbasis",
    "phi_1",
    "phi_1_sum",
    "phi_hat_1",
    "greens_matrix",
    "greens_column",
    "transition_matrix",
    "dirichlet_laplacian",
    "survival_prediction",
    "t_star",
    "UpdateSchedule",
    "Trajectory",
    "sample_schedule",
    "run_forward",
    "heat_flow",
    "sample_stationary",
    "BtrwTrajectory",
    "PropagatorBundle",
    "sample_btrw",
    "backward_propagate",
    "quenched_mean",
    "quenched_covariance",
    "covariance_gap_check",
    "representation_check",
    "survival_experiment",
    "StickyDraw",
    "CoupledTrace",
    "CoalescenceRecord",
    "TwoStageParams",
    "sticky_gaussian",
    "sticky_gaussian_batch",
    "dominated_bernoulli_check",
    "step_coupled",
    "run_coupled",
    "run_two_stage",
    "supermartingale_drift_check",
    "angle_bracket_rate",
    "ProfilePoint",
    "mean_decay_study",
    "shifted_stationary_init",
    "cutoff_profile_study",
    "coalescence_scaling_study",
    "profile_prediction",
    "derive_seed",
    "rng_for",
]
