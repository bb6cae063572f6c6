"""Sequential recommendation with content, temporal, and context weighing."""

from .model import Batch, ForwardResult, Model, ModelConfig, build_batch
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "Batch",
    "ForwardResult",
    "Model",
    "ModelConfig",
    "build_batch",
    "TrainConfig",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

__version__ = "0.1.0"
