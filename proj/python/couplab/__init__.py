"""Coupling diagnostics for Markov chains and delay equations."""

from ._core import (
    CouplabError,
    ConfigError,
    DiscreteMeasure,
    FiniteChain,
    InputError,
    IntegrationError,
    Metric,
    ModelError,
    ResourceError,
    SimulationError,
    SolverError,
    __version__,
    big_gamma,
    catalog,
    discrete_minimal_distance,
    gamma,
    instance,
    integrate_pair,
    list_experiments,
    max_closeness,
    metric,
    minimal_distance,
    run_config,
    solve_transport,
    total_variation,
    validate_config,
)

__all__ = [
    "CouplabError",
    "ConfigError",
    "DiscreteMeasure",
    "FiniteChain",
    "InputError",
    "IntegrationError",
    "Metric",
    "ModelError",
    "ResourceError",
    "SimulationError",
    "SolverError",
    "__version__",
    "big_gamma",
    "catalog",
    "discrete_minimal_distance",
    "gamma",
    "instance",
    "integrate_pair",
    "list_experiments",
    "max_closeness",
    "metric",
    "minimal_distance",
    "run_config",
    "solve_transport",
    "total_variation",
    "validate_config",
]
