"""Multi-modal recommendation with interaction-guided denoising and
total-correlation alignment of interaction, visual, and textual channels."""

from .config import TrainConfig, parse_config
from .data import (
    ContentFeatures,
    InteractionDataset,
    generate_synthetic,
    load_content_features,
    load_interactions,
    split_dataset,
)
from .errors import ConfigError, DataError, GTCError, NumericalError
from .model import GTCModel
from .trainer import VARIANTS, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContentFeatures",
    "DataError",
    "GTCError",
    "GTCModel",
    "InteractionDataset",
    "NumericalError",
    "TrainConfig",
    "TrainResult",
    "VARIANTS",
    "generate_synthetic",
    "load_content_features",
    "load_interactions",
    "parse_config",
    "split_dataset",
    "train",
    "__version__",
]
