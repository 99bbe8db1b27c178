"""Reference model builders used by tests and the model generator CLI.

Three physiological-monitoring extractor shapes ship with the engine:

* ``h_ppg``  — heart rate from wrist PPG: three blocks of three dilated
  convs (kernel 5, dilation 2) with ReLU, each block closed by average
  pooling; 8 s windows at 32 Hz (256 samples), 2 s step.
* ``h_eeg``  — seizure detection from scalp EEG: three blocks of conv
  (kernel 3) + ReLU + batch-norm + max pooling; 4 s windows at 256 Hz.
* ``h_acc``  — seizure detection from wrist acceleration: six convs
  (kernel 3) with ReLU and a single trailing batch-norm, no pooling.

Layer hyper-parameters not pinned by the architecture descriptions
(channel widths, pool sizes, head width) use the documented defaults
below; weights are seeded random draws, He-scaled for stable activations.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    BatchNormParams,
    ConvLayer,
    DenseLayer,
    FlattenLayer,
    PoolKind,
    PoolLayer,
    ReluLayer,
)
from .model import Layer, ModelSpec

DEFAULT_CHANNELS = 32


def _conv(rng: np.random.Generator, in_ch: int, out_ch: int, kernel: int,
          dilation: int) -> ConvLayer:
    w = rng.standard_normal((out_ch, in_ch, kernel)) / np.sqrt(in_ch * kernel)
    b = 0.1 * rng.standard_normal(out_ch)
    return ConvLayer(w, b, dilation=dilation)


def _dense(rng: np.random.Generator, in_units: int, out_units: int) -> DenseLayer:
    w = rng.standard_normal((out_units, in_units)) / np.sqrt(in_units)
    b = 0.1 * rng.standard_normal(out_units)
    return DenseLayer(w, b)


def _batchnorm(rng: np.random.Generator, ch: int) -> BatchNormParams:
    scale = 1.0 + 0.1 * rng.standard_normal(ch)
    shift = 0.05 * rng.standard_normal(ch)
    return BatchNormParams(scale, shift)


def build_h_ppg(seed: int = 7, channels: int = DEFAULT_CHANNELS) -> ModelSpec:
    """PPG heart-rate extractor: 9 convs (M=5, d=2), pools 8/2/2, dense head."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    in_ch = 1
    for pool_len in (8, 2, 2):
        for _ in range(3):
            layers.append(_conv(rng, in_ch, channels, kernel=5, dilation=2))
            layers.append(ReluLayer())
            in_ch = channels
        layers.append(PoolLayer(PoolKind.AVERAGE, pool_len))
    classifier_start = len(layers)
    window_len, step = 256, 64
    emb_cols = window_len // (8 * 2 * 2)
    layers.append(FlattenLayer())
    layers.append(_dense(rng, channels * emb_cols, 1))
    return ModelSpec(
        name="h_ppg", input_channels=1, sample_rate_hz=32.0,
        window_len=window_len, step=step,
        classifier_start=classifier_start, layers=tuple(layers),
    )


def build_h_eeg(seed: int = 11, channels: int = DEFAULT_CHANNELS) -> ModelSpec:
    """EEG seizure extractor: 3 blocks of conv(M=3)+ReLU+BN+maxpool(4)."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    in_ch = 18
    for _ in range(3):
        layers.append(_conv(rng, in_ch, channels, kernel=3, dilation=1))
        layers.append(ReluLayer())
        layers.append(_batchnorm(rng, channels))
        layers.append(PoolLayer(PoolKind.MAX, 4))
        in_ch = channels
    classifier_start = len(layers)
    window_len, step = 1024, 256
    emb_cols = window_len // (4 * 4 * 4)
    layers.append(FlattenLayer())
    layers.append(_dense(rng, channels * emb_cols, 2))
    return ModelSpec(
        name="h_eeg", input_channels=18, sample_rate_hz=256.0,
        window_len=window_len, step=step,
        classifier_start=classifier_start, layers=tuple(layers),
    )


def build_h_acc(seed: int = 13, channels: int = DEFAULT_CHANNELS) -> ModelSpec:
    """Accelerometer seizure extractor: 6 convs (M=3) + trailing batch-norm."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    in_ch = 3
    for _ in range(6):
        layers.append(_conv(rng, in_ch, channels, kernel=3, dilation=1))
        layers.append(ReluLayer())
        in_ch = channels
    layers.append(_batchnorm(rng, channels))
    classifier_start = len(layers)
    window_len, step = 960, 160
    layers.append(FlattenLayer())
    layers.append(_dense(rng, channels * window_len, 2))
    return ModelSpec(
        name="h_acc", input_channels=3, sample_rate_hz=32.0,
        window_len=window_len, step=step,
        classifier_start=classifier_start, layers=tuple(layers),
    )


REFERENCE_BUILDERS = {
    "h_ppg": build_h_ppg,
    "h_eeg": build_h_eeg,
    "h_acc": build_h_acc,
}
