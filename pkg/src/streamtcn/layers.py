"""Atomic network layers: causal conv, pooling, ReLU, batch-norm, dense.

Activations are float32 ``[channels, time]`` arrays.  Dot products
accumulate in float64 and are stored back as float32, so full-window and
chunked evaluation of the same samples agree to float32 rounding.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, ShapeError, StateError


@functools.lru_cache(maxsize=None)
def _zero_context(channels: int, pad: int) -> np.ndarray:
    # Shared read-only pad block: zero-padded chunked calls are hot, so
    # don't reallocate the constant context on every push.
    z = np.zeros((channels, pad), dtype=np.float32)
    z.flags.writeable = False
    return z


class PoolKind(enum.Enum):
    MAX = "max"
    AVERAGE = "avg"
    FIRST = "first"


def _frozen_f32(arr: np.ndarray, ndim: int, what: str) -> np.ndarray:
    out = np.array(arr, dtype=np.float32, order="C", copy=True)
    if out.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{what} contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ConvLayer:
    """Causal 1-D convolution with dilation.

    ``weights`` is ``[out_channels, in_channels, kernel_size]``; tap index
    runs left-to-right in time, so the last tap multiplies the current
    sample.  Output length equals input length thanks to ``pad_len``
    samples of left context (zeros or buffered signal).
    """

    weights: np.ndarray
    bias: np.ndarray
    dilation: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _frozen_f32(self.weights, 3, "conv weights"))
        object.__setattr__(self, "bias", _frozen_f32(self.bias, 1, "conv bias"))
        if self.bias.shape[0] != self.out_channels:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != out_channels {self.out_channels}"
            )
        if self.kernel_size < 1:
            raise ConfigError("kernel_size must be >= 1")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def pad_len(self) -> int:
        """Left context needed for one output sample: (M - 1) * dilation."""
        return (self.kernel_size - 1) * self.dilation


@dataclass
class PadState:
    """Mutable per-layer buffer holding the last ``pad_len`` input samples.

    Owned by a streaming session; zero-initialised so the first window of a
    stream sees the same implicit zeros as full-window inference.
    """

    buffer: np.ndarray

    @classmethod
    def zeros(cls, layer: ConvLayer) -> "PadState":
        return cls(np.zeros((layer.in_channels, layer.pad_len), dtype=np.float32))


@dataclass(frozen=True)
class ReluLayer:
    """Pointwise max(x, 0)."""


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-time batch-norm, pre-folded to per-channel scale and shift."""

    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", _frozen_f32(self.scale, 1, "batchnorm scale"))
        object.__setattr__(self, "shift", _frozen_f32(self.shift, 1, "batchnorm shift"))
        if self.scale.shape != self.shift.shape:
            raise ShapeError("batchnorm scale/shift length mismatch")

    @property
    def channels(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True)
class PoolLayer:
    """Non-overlapping temporal pooling: stride equals the pool length."""

    kind: PoolKind
    pool_len: int
    stride: int = field(default=0)

    def __post_init__(self) -> None:
        if self.pool_len < 1:
            raise ConfigError(f"pool_len must be >= 1, got {self.pool_len}")
        if self.stride == 0:
            object.__setattr__(self, "stride", self.pool_len)
        if self.stride != self.pool_len:
            raise ConfigError(
                f"stride ({self.stride}) must equal pool_len ({self.pool_len})"
            )


@dataclass(frozen=True)
class FlattenLayer:
    """Marks the feature/classifier boundary; ravels [ch, T] channel-major."""


@dataclass(frozen=True)
class DenseLayer:
    """Fully connected layer on a flat vector: y = W x + b."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _frozen_f32(self.weights, 2, "dense weights"))
        object.__setattr__(self, "bias", _frozen_f32(self.bias, 1, "dense bias"))
        if self.bias.shape[0] != self.out_units:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != out_units {self.out_units}"
            )

    @property
    def out_units(self) -> int:
        return self.weights.shape[0]

    @property
    def in_units(self) -> int:
        return self.weights.shape[1]


def conv1d_causal(x: np.ndarray, layer: ConvLayer,
                  state: PadState | None = None) -> np.ndarray:
    """Apply a causal conv to ``[in_channels, T]``, returning ``[out, T]``.

    With ``state=None`` the left context is zeros (zero padding).  With a
    ``PadState`` the buffered previous samples are used instead, and the
    buffer is advanced to the trailing ``pad_len`` samples of the padded
    stream — chunked evaluation then reproduces one long convolution.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] != layer.in_channels:
        raise ShapeError(
            f"input must be [in_channels={layer.in_channels}, T], got {x.shape}"
        )
    pad = layer.pad_len
    if state is not None:
        if state.buffer.shape != (layer.in_channels, pad):
            raise StateError(
                f"pad state shape {state.buffer.shape} does not match layer "
                f"({layer.in_channels}, {pad})"
            )
        context = state.buffer
    else:
        context = _zero_context(layer.in_channels, pad)

    t_len = x.shape[1]
    padded = np.concatenate([context, x], axis=1)
    if state is not None:
        state.buffer = padded[:, padded.shape[1] - pad:].copy()
    if t_len == 0:
        return np.zeros((layer.out_channels, 0), dtype=np.float32)

    span = pad + 1
    view = np.lib.stride_tricks.sliding_window_view(padded, span, axis=1)
    taps = view[:, :, ::layer.dilation]  # [in, T, M]
    acc = np.tensordot(layer.weights.astype(np.float64), taps.astype(np.float64),
                       axes=([1, 2], [0, 2]))
    acc += layer.bias.astype(np.float64)[:, np.newaxis]
    return acc.astype(np.float32)


def pool(x: np.ndarray, layer: PoolLayer) -> np.ndarray:
    """Reduce ``[ch, T]`` to ``[ch, T / pool_len]`` windows of the given kind.

    T must be an exact multiple of the pool length.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise ShapeError(f"pool input must be 2-D, got ndim={x.ndim}")
    t_len = x.shape[1]
    if t_len % layer.pool_len != 0:
        raise AlignmentError(
            f"pool length {layer.pool_len} does not divide input length {t_len}",
            pool_len=layer.pool_len, entering_len=t_len,
        )
    grouped = x.reshape(x.shape[0], t_len // layer.pool_len, layer.pool_len)
    if layer.kind is PoolKind.MAX:
        return grouped.max(axis=2)
    if layer.kind is PoolKind.AVERAGE:
        return grouped.astype(np.float64).mean(axis=2).astype(np.float32)
    return np.ascontiguousarray(grouped[:, :, 0])


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0.0))


def batchnorm_apply(x: np.ndarray, params: BatchNormParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] != params.channels:
        raise ShapeError(
            f"batchnorm input must be [{params.channels}, T], got {x.shape}"
        )
    return x * params.scale[:, np.newaxis] + params.shift[:, np.newaxis]


def dense_apply(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1 or x.shape[0] != layer.in_units:
        raise ShapeError(
            f"dense input must be a flat vector of {layer.in_units}, got {x.shape}"
        )
    acc = layer.weights.astype(np.float64) @ x.astype(np.float64)
    acc += layer.bias.astype(np.float64)
    return acc.astype(np.float32)


def fold_batchnorm(gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray,
                   var: np.ndarray, eps: float = 1e-5) -> BatchNormParams:
    """Collapse trained batch-norm statistics into scale/shift form.

    scale = gamma / sqrt(var + eps); shift = beta - scale * mean.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var + eps <= 0):
        raise ConfigError("variance + eps must be positive")
    scale = gamma / np.sqrt(var + eps)
    shift = beta - scale * mean
    return BatchNormParams(scale, shift)
