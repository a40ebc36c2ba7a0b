"""Synthetic self-training lab: data, network, and experiment driver."""

from .config import SynthConfig, SynthMetrics
from .data import SynthDataset, gen_data
from .lab import LaplaceMlpRegressor, confidence_select, evaluate, self_refine
from .net import (
    NetParams,
    forward,
    grad_check,
    init_params,
    laplace_nll,
    loss_and_grads,
    train,
)

__all__ = [
    "SynthConfig",
    "SynthMetrics",
    "SynthDataset",
    "gen_data",
    "LaplaceMlpRegressor",
    "confidence_select",
    "evaluate",
    "self_refine",
    "NetParams",
    "forward",
    "grad_check",
    "init_params",
    "laplace_nll",
    "loss_and_grads",
    "train",
]
