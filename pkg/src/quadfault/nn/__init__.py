"""Minimal deterministic neural-network kernel (numpy, explicit backward passes)."""

from .adam import AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check
from .model import (DTYPE, ModelParams, ModelSpec, backward_features, forward_features,
                    init_params, load_params, model_backward, model_forward, save_params)
from .ops import (conv1d, conv1d_backward, cross_entropy, dense, dense_backward, dropout,
                  dropout_backward, maxpool1d, maxpool1d_backward, mmd_linear,
                  mmd_linear_unbiased, mmd_rbf, relu, relu_backward, softmax,
                  softmax_cross_entropy)

__all__ = [
    "DTYPE", "ModelSpec", "ModelParams", "init_params", "model_forward", "model_backward",
    "forward_features", "backward_features", "save_params", "load_params",
    "AdamState", "adam_step", "GradCheckReport", "grad_check",
    "conv1d", "conv1d_backward", "maxpool1d", "maxpool1d_backward", "dense",
    "dense_backward", "relu", "relu_backward", "dropout", "dropout_backward",
    "softmax", "cross_entropy", "softmax_cross_entropy", "mmd_linear", "mmd_linear_unbiased", "mmd_rbf",
]
