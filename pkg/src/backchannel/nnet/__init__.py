"""Recurrent backchannel classifiers implemented directly in numpy."""
from .augment import augment, mask_values
from .losses import DomainError, data_loss, loss
from .model import (RecurrentModel, backward, cell_forward, forward, forward_window,
                    init_model, load_model, model_from_dict, model_to_dict, predict_proba,
                    save_model)
from .optim import make_optimizer, optimize_step
from .predict import TwoStageDetector, predict_events
from .train import (TIMING_CONFIG, TYPE_CONFIG, TrainConfig, TrainHistory, cross_validate,
                    gradients, grid_search, rank_configs, train_model)

__all__ = [
    "augment", "mask_values", "DomainError", "data_loss", "loss", "RecurrentModel", "backward",
    "cell_forward", "forward", "forward_window", "init_model", "load_model", "model_from_dict",
    "model_to_dict", "predict_proba", "save_model", "make_optimizer", "optimize_step",
    "predict_events", "TwoStageDetector", "TIMING_CONFIG", "TYPE_CONFIG", "TrainConfig", "TrainHistory",
    "cross_validate", "gradients", "grid_search", "rank_configs", "train_model",
]
