"""Trajectory prediction: autodiff engine, graph-recurrent model,
training loop, and model files."""

from . import autodiff
from .autodiff import Tensor, no_grad
from .model import (
    D_IN,
    STATE_DIM,
    DecoderParams,
    GateBlock,
    GraphCellParams,
    MixturePrediction,
    ModeHead,
    PredictionMode,
    attend,
    attention_weights,
    cell_step,
    decode,
    ekf_propagate,
    encode,
    kinematic_matrices,
    metrics,
    nll_loss,
    parameter_items,
)
from .store import load_model, save_model
from .train import (
    TrainHyper,
    TrainingSample,
    constant_motion_tracks,
    corpus_windows,
    extract_windows,
    gradient_check,
    init_model,
    predict_for_agent,
    sample_loss,
    train,
)

__all__ = [
    "D_IN",
    "STATE_DIM",
    "DecoderParams",
    "GateBlock",
    "GraphCellParams",
    "MixturePrediction",
    "ModeHead",
    "PredictionMode",
    "Tensor",
    "TrainHyper",
    "TrainingSample",
    "attend",
    "attention_weights",
    "autodiff",
    "cell_step",
    "constant_motion_tracks",
    "corpus_windows",
    "decode",
    "ekf_propagate",
    "encode",
    "extract_windows",
    "gradient_check",
    "init_model",
    "kinematic_matrices",
    "load_model",
    "metrics",
    "nll_loss",
    "no_grad",
    "parameter_items",
    "predict_for_agent",
    "sample_loss",
    "save_model",
    "train",
]
