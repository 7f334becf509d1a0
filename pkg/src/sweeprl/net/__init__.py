"""Minimal differentiable numerical kernel for the action-value network."""

from .checkpoint import load_network, save_network
from .gradcheck import grad_check
from .layers import (
    Conv2D,
    Deconv2D,
    Dense,
    Layer,
    MaxPool2,
    Network,
    ReLU,
    Upsample2,
    layer_from_spec,
)
from .optim import AdamLike, PlainSGD, make_optimizer

__all__ = [
    "AdamLike",
    "Conv2D",
    "Deconv2D",
    "Dense",
    "Layer",
    "MaxPool2",
    "Network",
    "PlainSGD",
    "ReLU",
    "Upsample2",
    "grad_check",
    "layer_from_spec",
    "load_network",
    "make_optimizer",
    "save_network",
]
