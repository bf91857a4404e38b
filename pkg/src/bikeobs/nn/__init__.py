"""Minimal numpy neural-network engine: layers, reverse-mode gradients, Adam."""
from .layers import (
    LSTM,
    Activation,
    Concat,
    Conv2D,
    Dense,
    Flatten,
    Layer,
    LstmState,
    MaxPool2D,
    layer_from_spec,
    lstm_cell,
)
from .network import Network, mse_loss, xavier_init
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "LSTM", "Activation", "Adam", "Concat", "Conv2D", "Dense", "Flatten", "Layer", "LstmState",
    "MaxPool2D", "Network", "SGD", "layer_from_spec", "lstm_cell", "make_optimizer", "mse_loss",
    "xavier_init",
]
