"""Information diffusion in networks of answering agents."""

from ._core import (
    ConfigError,
    DirectedNetwork,
    ExperimentConfig,
    LogisticKernel,
    LogisticKernelParams,
    NumericalError,
    ValidationError,
    compute_theta,
    config_reference,
    delta1_bound,
    emit_plotdata,
    experiment_kinds,
    generate_erdos_renyi,
    generate_power_law,
    in_degree_distribution,
    integrate_fast,
    load_config,
    lyapunov_V,
    parse_config,
    quantile,
    run_experiment,
    solve_quasi_steady,
    transition_matrix_G,
    wilson_interval,
)

__all__ = [name for name in dir() if not name.startswith("_")]
