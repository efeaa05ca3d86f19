"""Recurrent speed regressor: kernels, network API, training loop."""

from .kernels import BACKEND, USE_NUMBA
from .network import (
    ModelConfig,
    RecurrentState,
    SpeedModel,
    backward,
    forward,
    init_model,
    load_weights,
    lstm_layer_forward,
    masked_mse,
    param_layout,
    parameter_count,
    predict_stream,
    save_weights,
)
from .training import Adam, TrainConfig, TrainHistory, evaluate_rmse, train

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "ModelConfig",
    "RecurrentState",
    "SpeedModel",
    "Adam",
    "TrainConfig",
    "TrainHistory",
    "backward",
    "evaluate_rmse",
    "forward",
    "init_model",
    "load_weights",
    "lstm_layer_forward",
    "masked_mse",
    "param_layout",
    "parameter_count",
    "predict_stream",
    "save_weights",
    "train",
]
