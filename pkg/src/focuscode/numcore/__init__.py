"""Dense numeric primitives: layers with analytic gradients, LSTM, Adam."""

from .gradcheck import grad_check
from .layers import layer_backward, log_softmax, softmax
from .lstm import (
    LstmCellParams,
    backend,
    compiled_available,
    lstm_backward,
    lstm_forward,
    lstm_step,
    set_backend,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "LstmCellParams",
    "adam_step",
    "backend",
    "compiled_available",
    "grad_check",
    "layer_backward",
    "log_softmax",
    "lstm_backward",
    "lstm_forward",
    "lstm_step",
    "set_backend",
    "softmax",
]
