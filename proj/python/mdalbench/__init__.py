"""Multi-domain active learning benchmark engine (Python bindings)."""

from ._core import (
    AspModel,
    Error,
    ShapeError,
    ValidationError,
    __version__,
    allocate_budget,
    cli_main,
    compute_aulc,
    generate_synthetic,
    kl_divergence,
    kmeans,
    run_experiment,
    strategy_names,
)

__all__ = [
    "AspModel",
    "Error",
    "ShapeError",
    "ValidationError",
    "__version__",
    "allocate_budget",
    "cli_main",
    "compute_aulc",
    "generate_synthetic",
    "kl_divergence",
    "kmeans",
    "run_experiment",
    "strategy_names",
]
