"""gMLP family models: tensor kernels, cost accounting, and desk-scale training."""

from ._core import (
    Model,
    analyze,
    fit_power_law,
    gelu,
    gradcheck_ops,
    layer_norm,
    matmul,
    preset_json,
    presets,
    softmax_rows,
    toeplitz_materialize,
    toeplitzness,
)

__all__ = [
    "Model",
    "analyze",
    "fit_power_law",
    "gelu",
    "gradcheck_ops",
    "layer_norm",
    "matmul",
    "preset_json",
    "presets",
    "softmax_rows",
    "toeplitz_materialize",
    "toeplitzness",
]
