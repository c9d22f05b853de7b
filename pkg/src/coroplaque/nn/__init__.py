"""Small numpy neural-network engine with hand-written gradients."""

from .layers import (GRU, Conv2d, Conv3d, Dense, FractionalMaxPool2d, Layer, MaxPool3d, ReLU,
                     SliceFuse, bce_with_logits, fmp_intervals, fractional_max_pool,
                     fractional_max_pool_backward, sigmoid)
from .models import (ArchitectureConfig, BiGRUStack, CartesianRCNN, FeatureGRU, PolarRCNN,
                     Sequential, mlp)
from .train import Adam, TrainResult, load_checkpoint, save_checkpoint, train_loop

__all__ = [
    "GRU", "Conv2d", "Conv3d", "Dense", "FractionalMaxPool2d", "Layer", "MaxPool3d", "ReLU",
    "SliceFuse", "bce_with_logits", "fmp_intervals", "fractional_max_pool",
    "fractional_max_pool_backward", "sigmoid", "ArchitectureConfig", "BiGRUStack",
    "CartesianRCNN", "FeatureGRU", "PolarRCNN", "Sequential", "mlp", "Adam", "TrainResult",
    "load_checkpoint", "save_checkpoint", "train_loop",
]
