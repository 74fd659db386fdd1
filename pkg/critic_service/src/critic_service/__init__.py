"""Trains and serves the remote sufficiency critic over HTTP."""

__version__ = "0.1.0"

from .model import CriticModel, ModelError
from .server import create_app
from .textio import TraceExample, read_trace_dataset, render_input, truncate_context
from .trainer import TrainerConfig, TrainerError, TrainReport, train

__all__ = [
    "__version__",
    "CriticModel",
    "ModelError",
    "TraceExample",
    "TrainerConfig",
    "TrainerError",
    "TrainReport",
    "create_app",
    "read_trace_dataset",
    "render_input",
    "train",
    "truncate_context",
]
