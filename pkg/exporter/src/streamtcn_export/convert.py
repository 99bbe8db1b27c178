"""Translate a PyTorch sequential 1D CNN into an engine ModelSpec.

Weight layouts line up without transposition: torch ``Conv1d`` stores
``[out, in, taps]`` cross-correlation weights and the engine's causal
conv applies the same tap order over a left-padded stream, so tensors are
copied as-is.  Batch-norm is folded from running statistics into the
engine's per-channel scale/shift form at export time; there is no
unfolded batch-norm in the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from streamtcn import (
    ConvLayer,
    DenseLayer,
    FlattenLayer,
    ModelSpec,
    PoolKind,
    PoolLayer,
    ReluLayer,
    fold_batchnorm,
)

from .errors import ExportError
from .source import CausalConv1d


@dataclass(frozen=True)
class MappedLayer:
    """One engine layer and the index of the torch child it came from."""
    child_index: int
    layer: object


def _scalar(value) -> int:
    if isinstance(value, (tuple, list)):
        if len(value) != 1:
            raise ExportError(f"expected a 1-D hyper-parameter, got {value!r}")
        value = value[0]
    return int(value)


def _np(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy()


def _map_conv(child: CausalConv1d) -> ConvLayer:
    conv = child.conv
    if conv.groups != 1:
        raise ExportError("grouped convolutions are not supported")
    if _scalar(conv.stride) != 1:
        raise ExportError("strided convolutions are not supported")
    out_ch = conv.out_channels
    bias = _np(conv.bias) if conv.bias is not None else np.zeros(out_ch)
    return ConvLayer(_np(conv.weight), bias, dilation=_scalar(conv.dilation))


def _map_batchnorm(child: nn.BatchNorm1d):
    if child.training:
        raise ExportError("batch-norm must be in eval mode to export")
    if child.running_mean is None or child.running_var is None:
        raise ExportError("batch-norm without running statistics cannot be "
                          "folded; enable track_running_stats")
    n = child.num_features
    gamma = _np(child.weight) if child.affine else np.ones(n)
    beta = _np(child.bias) if child.affine else np.zeros(n)
    return fold_batchnorm(gamma, beta, _np(child.running_mean),
                          _np(child.running_var), eps=child.eps)


def _map_pool(child, kind: PoolKind) -> PoolLayer:
    k = _scalar(child.kernel_size)
    stride = _scalar(child.stride) if child.stride is not None else k
    if stride != k:
        raise ExportError(
            f"pooling stride {stride} != window {k}; only non-overlapping "
            "pooling has a streaming equivalent"
        )
    if _scalar(child.padding) != 0:
        raise ExportError("padded pooling is not supported")
    if isinstance(child, nn.MaxPool1d) and _scalar(child.dilation) != 1:
        raise ExportError("dilated pooling is not supported")
    return PoolLayer(kind, k)


def map_children(module: nn.Module) -> list[MappedLayer]:
    """Convert each torch child to its engine layer, preserving provenance.

    Inference no-ops (Dropout, Identity) are dropped.  Anything else
    outside the supported vocabulary raises :class:`ExportError` — in
    particular plain ``nn.Conv1d``, whose symmetric (or absent) padding
    has no causal-streaming interpretation.
    """
    if not isinstance(module, nn.Sequential):
        raise ExportError(
            f"model graph must be nn.Sequential, got {type(module).__name__}"
        )
    mapped: list[MappedLayer] = []
    for i, child in enumerate(module.children()):
        if isinstance(child, CausalConv1d):
            layer = _map_conv(child)
        elif isinstance(child, nn.Conv1d):
            raise ExportError(
                f"child {i}: plain Conv1d is not exportable; wrap it in "
                "CausalConv1d (left padding) — symmetric padding is "
                "rejected, not converted"
            )
        elif isinstance(child, nn.ReLU):
            layer = ReluLayer()
        elif isinstance(child, nn.BatchNorm1d):
            layer = _map_batchnorm(child)
        elif isinstance(child, nn.MaxPool1d):
            layer = _map_pool(child, PoolKind.MAX)
        elif isinstance(child, nn.AvgPool1d):
            layer = _map_pool(child, PoolKind.AVERAGE)
        elif isinstance(child, nn.Flatten):
            if child.start_dim != 1:
                raise ExportError(f"child {i}: Flatten must start at dim 1")
            layer = FlattenLayer()
        elif isinstance(child, nn.Linear):
            bias = (_np(child.bias) if child.bias is not None
                    else np.zeros(child.out_features))
            layer = DenseLayer(_np(child.weight), bias)
        elif isinstance(child, (nn.Dropout, nn.Identity)):
            continue  # inference no-op
        else:
            raise ExportError(
                f"child {i}: unsupported layer kind {type(child).__name__}"
            )
        mapped.append(MappedLayer(i, layer))
    return mapped


def convert_module(module: nn.Module, *, name: str, input_channels: int,
                   sample_rate_hz: float, window_len: int,
                   step: int) -> ModelSpec:
    """Build the engine spec for a source network.

    The classifier boundary is placed at the first Flatten; without one
    the whole network is treated as a feature extractor.  Structural
    problems the engine can spot (channel mismatches, pool alignment,
    dense fan-in) surface as its own validation errors.
    """
    layers = tuple(m.layer for m in map_children(module))
    starts = [i for i, l in enumerate(layers) if isinstance(l, FlattenLayer)]
    classifier_start = starts[0] if starts else len(layers)
    return ModelSpec(
        name=name, input_channels=input_channels,
        sample_rate_hz=sample_rate_hz, window_len=window_len, step=step,
        classifier_start=classifier_start, layers=layers,
    )
