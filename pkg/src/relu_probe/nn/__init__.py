"""Minimal numpy network engine: dense, conv, max-pool and ReLU layers."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import LayerSpec
from .network import Network, build_network, forward_collect, forward_inject
from .presets import INPUT_SHAPES, preset
from .training import (
    History,
    TrainConfig,
    accuracy,
    evaluate,
    gradient_check,
    randomize_labels,
    softmax_cross_entropy,
    train,
)

__all__ = [
    "History", "INPUT_SHAPES", "LayerSpec", "Network", "TrainConfig", "accuracy",
    "build_network", "evaluate", "forward_collect", "forward_inject", "gradient_check",
    "load_checkpoint", "preset", "randomize_labels", "save_checkpoint",
    "softmax_cross_entropy", "train",
]
