"""Categorical generative adversarial networks on a small numpy autodiff core."""

from .autodiff import Tape, Tensor, backward
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, LabeledSplit, Standardizer, make_synthetic, split_semi_supervised
from .evaluation import matched_error, predict_classes
from .nn import Network, NetworkSpec, LayerSpec, forward, init_network
from .training import TrainConfig, TrainedPair, train

__version__ = "0.1.0"

__all__ = [
    "Tape", "Tensor", "backward", "load_checkpoint", "save_checkpoint", "Dataset", "LabeledSplit",
    "Standardizer", "make_synthetic", "split_semi_supervised", "matched_error", "predict_classes", "Network", "NetworkSpec", "LayerSpec", "forward", "init_network",
    "TrainConfig", "TrainedPair", "train",
]
