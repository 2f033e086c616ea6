"""Convolutional-recurrent classifier over spherical direction classes."""

from ambiloc.model.config import (
    ArchConfig,
    REFERENCE_PARAMETER_COUNTS,
    config_by_name,
    count_parameters,
    named_configs,
    parameter_shapes,
    shape_propagate,
)
from ambiloc.model.network import Network, initialize_parameters
from ambiloc.model.training import (
    TrainResult,
    TrainSchedule,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "ArchConfig",
    "REFERENCE_PARAMETER_COUNTS",
    "config_by_name",
    "count_parameters",
    "named_configs",
    "parameter_shapes",
    "shape_propagate",
    "Network",
    "initialize_parameters",
    "TrainResult",
    "TrainSchedule",
    "TrainingDiverged",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
