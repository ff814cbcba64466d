"""Self-paced cross-modal hashing robust to noisy labels."""

__version__ = "0.1.0"

from .data import MultiModalDataset, SynthSpec, generate_synthetic, inject_symmetric_noise, split
from .encoder import binarize, encode, init_centers, init_params
from .losses import BatchCodes, LossConfig
from .pacer import PaceSchedule, SampleWeights, gamma_bounds, optimal_weight, refresh_weights
from .trainer import TrainConfig, TrainReport, train

__all__ = [
    "__version__",
    "MultiModalDataset",
    "SynthSpec",
    "generate_synthetic",
    "inject_symmetric_noise",
    "split",
    "binarize",
    "encode",
    "init_centers",
    "init_params",
    "BatchCodes",
    "LossConfig",
    "PaceSchedule",
    "SampleWeights",
    "gamma_bounds",
    "optimal_weight",
    "refresh_weights",
    "TrainConfig",
    "TrainReport",
    "train",
]
