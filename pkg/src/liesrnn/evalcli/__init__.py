"""Evaluation metrics, experiment drivers, run configuration and the CLI."""
from .config import ConfigError, RunConfig, load_config, parse_config
from .experiments import (
    compare_physics,
    compare_trained,
    convergence_problem,
    convergence_study,
    evaluate_model,
    fit_slope,
    ordering_check,
    precess_demo,
)
from .metrics import (
    MetricsReport,
    evaluate_trajectories,
    metric_conservation,
    metric_force_errors,
    metric_potential_grad_errors,
    metric_trajectory,
    reports_from_csv,
    reports_to_csv,
)

__all__ = [
    "ConfigError", "MetricsReport", "RunConfig", "compare_physics", "compare_trained", "convergence_problem",
    "convergence_study", "evaluate_model", "evaluate_trajectories", "fit_slope", "load_config",
    "metric_conservation", "metric_force_errors", "metric_potential_grad_errors", "metric_trajectory",
    "ordering_check", "parse_config", "precess_demo", "reports_from_csv", "reports_to_csv",
]
