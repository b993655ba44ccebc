"""Minimal NumPy neural-network engine used by both networks."""
from . import functional
from .functional import (
    add_skip,
    concat_channels,
    conv2d,
    dwconv2d,
    fully_connected,
    leaky_relu,
    maxpool2,
    relu,
    sigmoid,
    softmax_channels,
    upsample2,
)
from .graph import GraphError, LayerGraph, flops, param_count
from .weights import load_weights, save_weights

__all__ = [
    "functional", "LayerGraph", "GraphError", "flops", "param_count",
    "save_weights", "load_weights", "conv2d", "dwconv2d", "maxpool2", "upsample2",
    "fully_connected", "relu", "leaky_relu", "sigmoid", "softmax_channels",
    "concat_channels", "add_skip",
]
