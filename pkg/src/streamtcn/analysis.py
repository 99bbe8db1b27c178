"""Shiftability analysis: pooling shift-error bounds and padding probes.

Non-overlapping pooling is only shift-invariant when the stream advances
by whole pooling groups.  For a band-limited signal (amplitude ``A``,
highest component ``f_max``, sampled at ``f_s``) two samples one step
apart differ by at most ``min(2*pi*A*f_max/f_s, 2A)``, so reusing a pooled
output displaced by up to ``pool_len - 1`` samples errs by at most
``(pool_len - 1)`` times that.  The functions here evaluate those bounds,
measure the empirical error on synthetic signals, and probe how far
zero-padding corruption reaches into a feature extractor.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInputError, UnsupportedLayerError
from .layers import (
    BatchNormParams,
    ConvLayer,
    PoolKind,
    PoolLayer,
    ReluLayer,
    pool,
)
from .model import ModelSpec, alignment_check, AlignmentReport
from .signals import Signal, SignalKind, SyntheticSpec, WindowConfig, gen_signal, sup_amplitude


@dataclass(frozen=True)
class PoolingBoundInput:
    """Signal-side quantities the bounds depend on."""

    amplitude: float
    f_max_hz: float
    f_s_hz: float
    pool_len: int

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.f_s_hz <= 0:
            raise ConfigError(f"f_s_hz must be > 0, got {self.f_s_hz}")
        if not 0 <= self.f_max_hz < self.f_s_hz / 2:
            raise ConfigError(
                f"f_max_hz must satisfy 0 <= f_max < f_s/2, got "
                f"f_max={self.f_max_hz} f_s={self.f_s_hz}"
            )
        if self.pool_len < 1:
            raise ConfigError(f"pool_len must be >= 1, got {self.pool_len}")


def consecutive_sample_bound(inp: PoolingBoundInput) -> float:
    """Worst |x[n] - x[n-1]| for a band-limited signal; saturates at 2A."""
    slope = 2.0 * math.pi * inp.amplitude * inp.f_max_hz / inp.f_s_hz
    return min(slope, 2.0 * inp.amplitude)


def pooling_error_bound(inp: PoolingBoundInput) -> float:
    """Worst pooled-output error for a grid displaced < pool_len samples.

    ``(pool_len - 1)`` consecutive-sample steps; in the saturated regime
    this reads ``2A * (pool_len - 1)``.
    """
    return (inp.pool_len - 1) * consecutive_sample_bound(inp)


def _relative_bound(f_max_hz: float, f_s_hz: float, pool_len: int) -> float:
    """Bound in units of A, capped at 2: bounded signals differ by <= 2A."""
    raw = (pool_len - 1) * min(2.0 * math.pi * f_max_hz / f_s_hz, 2.0)
    return min(raw, 2.0)


@dataclass(frozen=True)
class ShiftError:
    """Worst mean/max relative pooled-shift error over a step sweep."""

    mean_rel: float
    max_rel: float


def empirical_pool_shift_error(signal: Signal, layer: PoolLayer,
                               window_len: int,
                               step_sweep: list[int]) -> ShiftError:
    """Measure pooled-output reuse error between windows offset by each step.

    For each step S the pooled outputs of ``x[0:L]`` are shifted by
    ``floor(S / pool_len)`` groups and compared against the pooled outputs
    of ``x[S:S+L]`` over the overlap; errors are normalised by the
    signal's sup amplitude.  Returns the worst mean and worst max over the
    sweep.  An aligned step (multiple of ``pool_len``) contributes exactly
    zero: both windows pool identical sample groups.
    """
    if window_len % layer.pool_len != 0:
        raise ConfigError(
            f"window_len {window_len} must be a multiple of pool_len {layer.pool_len}"
        )
    if not step_sweep:
        raise ConfigError("step_sweep must not be empty")
    x = signal.samples[0]
    amp = sup_amplitude(signal)
    if amp == 0.0:
        # All-zero signal: pooled outputs agree exactly, so the relative
        # error is zero in the limit rather than 0/0.
        return ShiftError(0.0, 0.0)
    n_groups = window_len // layer.pool_len
    worst_mean = 0.0
    worst_max = 0.0
    for step in step_sweep:
        if not 0 < step < window_len:
            raise ConfigError(f"step {step} must be in (0, window_len)")
        if step + window_len > signal.length:
            raise EmptyInputError(
                f"signal too short for window_len={window_len} step={step}"
            )
        p1 = pool(x[np.newaxis, :window_len], layer)[0]
        p2 = pool(x[np.newaxis, step:step + window_len], layer)[0]
        shift = step // layer.pool_len
        n_overlap = n_groups - shift
        diff = np.abs(p1[shift:].astype(np.float64) - p2[:n_overlap].astype(np.float64))
        worst_mean = max(worst_mean, float(diff.mean()) / amp)
        worst_max = max(worst_max, float(diff.max()) / amp)
    return ShiftError(worst_mean, worst_max)


@dataclass(frozen=True)
class SweepRow:
    param: float
    mean_rel: float
    max_rel: float
    bound_rel: float

    def __post_init__(self) -> None:
        # Soundness is part of the type's contract, not just a test.
        if self.max_rel > self.bound_rel + 1e-9:
            raise ConfigError(
                f"empirical max {self.max_rel} exceeds bound {self.bound_rel} "
                f"at param {self.param}"
            )


@dataclass(frozen=True)
class SweepResult:
    swept: str
    rows: tuple[SweepRow, ...]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["param", "mean_rel", "max_rel", "bound"])
            for row in self.rows:
                writer.writerow([repr(float(row.param)), repr(row.mean_rel),
                                 repr(row.max_rel), repr(row.bound_rel)])

    def to_json(self, path: str | Path) -> None:
        payload = {
            "swept": self.swept,
            "rows": [
                {"param": row.param, "mean_rel": row.mean_rel,
                 "max_rel": row.max_rel, "bound": row.bound_rel}
                for row in self.rows
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _step_candidates(pool_len: int, limit: int = 64) -> list[int]:
    """Misaligned offsets in [1, pool_len): all of them, or a spread subset."""
    if pool_len < 2:
        return []
    if pool_len - 1 <= limit:
        return list(range(1, pool_len))
    picks = np.unique(np.linspace(1, pool_len - 1, limit).astype(int))
    return [int(s) for s in picks if s % pool_len != 0]


def _window_for(pool_len: int, min_len: int = 256, groups: int = 4) -> int:
    """Window long enough for several pooled groups and a full period."""
    return max(groups, math.ceil(min_len / pool_len)) * pool_len


def sweep_fs(spec: SyntheticSpec, fs_list: list[float],
             pool_window_seconds: float, kind: PoolKind) -> SweepResult:
    """Shift error vs. sampling rate with the pooling window fixed in seconds."""
    rows = []
    for fs in fs_list:
        pool_len = int(round(pool_window_seconds * fs))
        if pool_len < 2:
            raise ConfigError(
                f"pooling window {pool_window_seconds}s at {fs} Hz is under 2 samples"
            )
        layer = PoolLayer(kind, pool_len)
        window_len = _window_for(pool_len)
        steps = _step_candidates(pool_len)
        duration = (window_len + pool_len + 1) / fs
        sig = gen_signal(replace(spec, duration_s=duration), fs)
        err = empirical_pool_shift_error(sig, layer, window_len, steps)
        bound = _relative_bound(spec.max_freq_hz, fs, pool_len)
        rows.append(SweepRow(float(fs), err.mean_rel, err.max_rel, bound))
    return SweepResult("f_s_hz", tuple(rows))


def sweep_pool_len(spec: SyntheticSpec, pool_len_list: list[int],
                   f_s_hz: float, kind: PoolKind) -> SweepResult:
    """Shift error vs. pooling length at a fixed sampling rate."""
    rows = []
    for pool_len in pool_len_list:
        if pool_len < 2:
            raise ConfigError(f"pool_len must be >= 2 in a sweep, got {pool_len}")
        layer = PoolLayer(kind, pool_len)
        window_len = _window_for(pool_len)
        steps = _step_candidates(pool_len)
        duration = (window_len + pool_len + 1) / f_s_hz
        sig = gen_signal(replace(spec, duration_s=duration), f_s_hz)
        err = empirical_pool_shift_error(sig, layer, window_len, steps)
        bound = _relative_bound(spec.max_freq_hz, f_s_hz, pool_len)
        rows.append(SweepRow(float(pool_len), err.mean_rel, err.max_rel, bound))
    return SweepResult("pool_len", tuple(rows))


# --- zero-padding probe ---------------------------------------------------

PROBE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ProbeRow:
    layer_index: int
    layer_kind: str
    total: int
    affected: int

    @property
    def fraction(self) -> float:
        return self.affected / self.total if self.total else 0.0


@dataclass(frozen=True)
class ProbeReport:
    rows: tuple[ProbeRow, ...]

    @property
    def final_conv_fraction(self) -> float:
        conv_rows = [r for r in self.rows if r.layer_kind == "conv"]
        if not conv_rows:
            raise UnsupportedLayerError("probe report has no conv layers")
        return conv_rows[-1].fraction

    def conv_fractions(self) -> list[float]:
        return [r.fraction for r in self.rows if r.layer_kind == "conv"]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "total", "affected", "fraction"])
            for row in self.rows:
                writer.writerow([row.layer_index, row.total, row.affected,
                                 repr(row.fraction)])


def zero_padding_probe(spec: ModelSpec) -> ProbeReport:
    """Trace how far each layer's zero padding corrupts a constant input.

    Every conv is replaced by a moving average (uniform taps, zero bias),
    batch-norm by identity, and an all-ones window is pushed through the
    feature extractor.  Interior outputs stay exactly 1; any activation
    below ``1 - 1e-6`` has been touched by padding.  All channels behave
    identically under these weights, so a single representative channel is
    simulated — in float64, keeping corruption margins well clear of the
    threshold even for deep large-kernel stacks.
    """
    for i, layer in enumerate(spec.feature_layers):
        if not isinstance(layer, (ConvLayer, ReluLayer, BatchNormParams, PoolLayer)):
            raise UnsupportedLayerError(
                f"layer {i} ({type(layer).__name__}) is not probeable"
            )
    x = np.ones(spec.window_len, dtype=np.float64)
    rows = []
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, ConvLayer):
            pad = layer.pad_len
            padded = np.concatenate([np.zeros(pad), x])
            span = pad + 1
            view = np.lib.stride_tricks.sliding_window_view(padded, span)
            x = view[:, ::layer.dilation].mean(axis=1)
            kind = "conv"
        elif isinstance(layer, PoolLayer):
            groups = x.reshape(-1, layer.pool_len)
            if layer.kind is PoolKind.MAX:
                x = groups.max(axis=1)
            elif layer.kind is PoolKind.AVERAGE:
                x = groups.mean(axis=1)
            else:
                x = groups[:, 0].copy()
            kind = "pool"
        elif isinstance(layer, ReluLayer):
            x = np.maximum(x, 0.0)
            kind = "relu"
        else:
            kind = "batchnorm"  # identity under probe weights
        affected = int(np.count_nonzero(x < 1.0 - PROBE_THRESHOLD))
        rows.append(ProbeRow(i, kind, x.size, affected))
    return ProbeReport(tuple(rows))


# --- shiftability report --------------------------------------------------

class Recommendation(enum.Enum):
    APPROXIMATE_STREAMING = "approximate-streaming"
    EXACT_STREAMING = "exact-streaming"
    RETRAIN_SIGNAL_PADDING = "retrain-signal-padding"


@dataclass(frozen=True)
class PoolStageBound:
    layer_index: int
    pool_len: int
    effective_fs_hz: float
    bound_rel: float


@dataclass(frozen=True)
class ShiftabilityReport:
    alignment: AlignmentReport
    probe: ProbeReport
    pool_bounds: tuple[PoolStageBound, ...]
    recommendation: Recommendation
    alignment_blocking: bool

    def to_dict(self) -> dict:
        return {
            "aligned": self.alignment.aligned,
            "alignment_blocking": self.alignment_blocking,
            "stages": [
                {"layer": s.layer_index, "pool_len": s.pool_len,
                 "entering_len": s.entering_len, "divisible": s.divisible}
                for s in self.alignment.stages
            ],
            "final_conv_fraction": self.probe.final_conv_fraction,
            "pool_bounds": [
                {"layer": b.layer_index, "pool_len": b.pool_len,
                 "effective_fs_hz": b.effective_fs_hz, "bound_rel": b.bound_rel}
                for b in self.pool_bounds
            ],
            "recommendation": self.recommendation.value,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def shiftability_report(spec: ModelSpec, cfg: WindowConfig,
                        f_max_hz: float | None = None) -> ShiftabilityReport:
    """Bundle everything a porting decision needs for one model.

    Per-stage bounds use the sampling rate reduced by the pooling factor
    accumulated above each stage; ``f_max_hz`` defaults to one eighth of
    the input rate when the caller has no tighter band limit, and is
    clamped below each stage's effective Nyquist (the bound saturates long
    before that, so clamping never loosens it).

    Thresholds on the final conv's corrupted fraction: <= 5% approximate
    streaming is viable, <= 25% stream exactly with pad buffers, above
    that the padding mismatch is structural — retrain with signal padding.
    """
    if f_max_hz is None:
        f_max_hz = spec.sample_rate_hz / 8.0
    probe = zero_padding_probe(spec)
    align = alignment_check(cfg, spec)
    bounds = []
    factor = 1
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, PoolLayer):
            eff_fs = spec.sample_rate_hz / factor
            eff_fmax = min(f_max_hz, 0.499 * eff_fs)
            bounds.append(PoolStageBound(
                i, layer.pool_len, eff_fs,
                _relative_bound(eff_fmax, eff_fs, layer.pool_len),
            ))
            factor *= layer.pool_len
    fraction = probe.final_conv_fraction
    if fraction <= 0.05:
        rec = Recommendation.APPROXIMATE_STREAMING
    elif fraction <= 0.25:
        rec = Recommendation.EXACT_STREAMING
    else:
        rec = Recommendation.RETRAIN_SIGNAL_PADDING
    return ShiftabilityReport(align, probe, tuple(bounds), rec, not align.aligned)
