"""Desk-scale laboratory for finite-time extinction in 1-D stochastic
fast-diffusion porous media dynamics."""

from .analysis import (
    SupermartingaleSeries,
    check_absorption,
    detect_extinction,
    ensemble_supermartingale_test,
    supermartingale_series,
)
from .harness import (
    EnsembleSummary,
    ExperimentConfig,
    InitialSpec,
    compare_with_bound,
    config_from_dict,
    config_from_yaml,
    make_initial,
    run_ensemble,
    wilson_interval,
)
from .nonlinearity import (
    AuxiliaryLaw,
    DiffusionLaw,
    ModelParams,
    RegularizationParams,
    aux_psi,
    psi0,
    resolvent,
    yosida,
)
from .noise import NoiseSpec, WienerIncrements, c_star, make_stream, noise_field, sample_increments
from .operators import (
    Field,
    GammaEstimate,
    GridSpec,
    SpectralBasis,
    apply_laplacian,
    build_basis,
    estimate_gamma,
    inner_hm1,
    norm_hm1,
    norm_lp,
    solve_poisson,
)
from .stepper import (
    PathResult,
    SolverConfig,
    Trajectory,
    convergence_study,
    implicit_solve,
    run_path,
    step,
    weak_form_residual,
)
from .theory import (
    BoundInputs,
    deterministic_extinction_time,
    extinction_bound,
    integral_factor,
    positive_probability_condition,
    time_to_reach_bound,
)

__version__ = "0.1.0"
