"""1D residual convolutional regressor, written directly on numpy.

Forward and reverse passes, Adam with an L2 penalty, the learning-rate
schedule, and early stopping are all implemented here in float64 so the
gradients can be checked against finite differences.
"""

from sonabs.network.model import (
    FeatureStats,
    NetworkConfig,
    NetworkModel,
    build_network,
    load_model,
    loss_and_gradients,
    save_model,
)
from sonabs.network.training import TrainConfig, TrainingDiverged, train

__all__ = [
    "FeatureStats",
    "NetworkConfig",
    "NetworkModel",
    "build_network",
    "load_model",
    "save_model",
    "loss_and_gradients",
    "TrainConfig",
    "TrainingDiverged",
    "train",
]
