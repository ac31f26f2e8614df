"""Probe-evasion organism: python surface over the C++ core."""

from ._camo import (
    ContractError,
    ExperimentConfig,
    InputError,
    Pipeline,
    ShapeError,
    StageRecord,
    __version__,
    auroc,
    calibrate_threshold,
    format_double,
    gradcheck,
    pearson,
    run_acceptance_criteria,
)

__all__ = [
    "ContractError",
    "ExperimentConfig",
    "InputError",
    "Pipeline",
    "ShapeError",
    "StageRecord",
    "__version__",
    "auroc",
    "calibrate_threshold",
    "format_double",
    "gradcheck",
    "pearson",
    "run_acceptance_criteria",
]
