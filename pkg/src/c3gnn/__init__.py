"""Class-imbalanced graph classification with subclass-aware contrastive learning."""
from .autodiff import Tensor, backward, grad_check
from .encoder import EncoderDims, init_params, load_checkpoint, predict, save_checkpoint
from .graphdata import Dataset, Graph, LabeledGraph, load_dataset, parse_tu_dataset, save_dataset
from .trainer import TrainConfig, fit

__version__ = "0.1.0"
