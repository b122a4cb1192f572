from .tensor import (
    DTYPE,
    NumericsError,
    Tensor,
    as_tensor,
    concat,
    gather_rows,
    matmul,
    parameter,
    relu,
    sigmoid,
    softplus,
    tabs,
    tanh,
)
from .layers import ConfigError, LSTMParams, bilstm, conv1d_same, glorot, init_lstm, linear, lstm_scan, lstm_step
from .losses import HuberConfig, huber_loss, l1_loss
from .optim import AdamState, TrainingSchedule, adam_step, clip_global_norm
from .gradcheck import GradCheckError, GradCheckReport, grad_check
from .module import Module

__all__ = [
    "DTYPE", "NumericsError", "Tensor", "as_tensor", "concat", "gather_rows", "matmul", "parameter",
    "relu", "sigmoid", "softplus", "tabs", "tanh",
    "ConfigError", "LSTMParams", "bilstm", "conv1d_same", "glorot", "init_lstm", "linear", "lstm_scan", "lstm_step",
    "HuberConfig", "huber_loss", "l1_loss",
    "AdamState", "TrainingSchedule", "adam_step", "clip_global_norm",
    "GradCheckError", "GradCheckReport", "grad_check",
    "Module",
]
