"""Siamese spatial-spectral comparison network for anomalous change detection."""

from .model import ArchConfig, MtcNetModel, cube_to_input, patches_to_input
from .train import TrainConfig, make_batches, simsiam_loss, train, write_history_csv
from .infer import backbone_features, infer_loss_map
from .persist import load_model, save_model

__all__ = [
    "ArchConfig",
    "MtcNetModel",
    "TrainConfig",
    "simsiam_loss",
    "train",
    "infer_loss_map",
    "backbone_features",
    "save_model",
    "load_model",
    "patches_to_input",
    "cube_to_input",
    "make_batches",
    "write_history_csv",
]
