"""Benchmark helpers: random models/signals, MAC ratios, wall-clock fits.

Streaming replaces one full-window pass per step with a pass over just
the new samples, so compute per inference drops by the window/step ratio.
``bench_speedup`` measures that on real timers two ways: per-step rows
(median cost of one push, per step size, next to the MAC counts) and a
linear fit of total wall time against total samples processed.  The fit
is where the mode ordering lives: exact streaming pays a constant
pad-state read/write toll on every push, so its cost per ingested
sample — the fitted slope — sits at or above the approximate mode's.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .layers import (
    BatchNormParams,
    ConvLayer,
    DenseLayer,
    FlattenLayer,
    PoolKind,
    PoolLayer,
    ReluLayer,
)
from .model import Layer, ModelSpec, full_inference, mac_count
from .signals import Signal, WindowConfig
from .streaming import Mode, StreamSession


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float


def fit_line(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Ordinary least squares y = slope * x + intercept.

    Needs at least two distinct x values.  A constant y fits perfectly
    (slope 0, r^2 = 1).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ConfigError("fit_line expects two equal-length 1-D arrays")
    if x.size < 2 or np.ptp(x) == 0.0:
        raise ConfigError("fit_line needs at least two distinct x values")
    xm = x.mean()
    ym = y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    slope = sxy / sxx
    intercept = ym - slope * xm
    ss_res = float(((y - slope * x - intercept) ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return LineFit(slope, intercept, r2)


# --- random instances -----------------------------------------------------

WIDTH_CHOICES = (8, 16, 32)
KERNEL_CHOICES = (3, 5)
DILATION_CHOICES = (1, 2)
DEPTH_RANGE = (3, 9)


def _he_conv(rng: np.random.Generator, in_ch: int, out_ch: int, kernel: int,
             dilation: int) -> ConvLayer:
    w = rng.standard_normal((out_ch, in_ch, kernel)) / np.sqrt(in_ch * kernel)
    b = 0.1 * rng.standard_normal(out_ch)
    return ConvLayer(w, b, dilation=dilation)


def random_model(rng: np.random.Generator, cfg: WindowConfig, *,
                 input_channels: int | None = None,
                 depth: int | None = None,
                 width: int | None = None,
                 kernels: tuple[int, ...] = KERNEL_CHOICES,
                 dilations: tuple[int, ...] = DILATION_CHOICES,
                 pool_lens: tuple[int, ...] = (),
                 pool_kind: PoolKind = PoolKind.AVERAGE,
                 with_batchnorm: bool = False,
                 classifier_units: int | None = 2,
                 sample_rate_hz: float = 64.0,
                 name: str = "random") -> ModelSpec:
    """Draw a random conv stack compatible with ``cfg``.

    Pool layers from ``pool_lens`` are spread evenly between the convs;
    the caller is responsible for picking a step the pool product divides
    (or for forcing misalignment deliberately).  ``classifier_units=None``
    builds a bare feature extractor.
    """
    if depth is None:
        depth = int(rng.integers(DEPTH_RANGE[0], DEPTH_RANGE[1] + 1))
    if width is None:
        width = int(rng.choice(WIDTH_CHOICES))
    if input_channels is None:
        input_channels = int(rng.integers(1, 4))
    if len(pool_lens) >= depth:
        raise ConfigError("need fewer pool stages than conv layers")

    # place pool i after conv number positions[i] (1-based)
    n_pools = len(pool_lens)
    positions = [
        math.ceil((i + 1) * depth / (n_pools + 1)) for i in range(n_pools)
    ] if n_pools else []

    layers: list[Layer] = []
    in_ch = input_channels
    pool_iter = iter(pool_lens)
    pos_iter = iter(positions)
    next_pos = next(pos_iter, None)
    for conv_idx in range(1, depth + 1):
        kernel = int(rng.choice(kernels))
        dilation = int(rng.choice(dilations))
        layers.append(_he_conv(rng, in_ch, width, kernel, dilation))
        layers.append(ReluLayer())
        in_ch = width
        if with_batchnorm and rng.random() < 0.3:
            scale = 1.0 + 0.1 * rng.standard_normal(width)
            shift = 0.05 * rng.standard_normal(width)
            layers.append(BatchNormParams(scale, shift))
        if next_pos == conv_idx:
            layers.append(PoolLayer(pool_kind, next(pool_iter)))
            next_pos = next(pos_iter, None)

    classifier_start = len(layers)
    if classifier_units is not None:
        factor = 1
        for p in pool_lens:
            factor *= p
        emb_cols = cfg.window_len // factor
        layers.append(FlattenLayer())
        w = rng.standard_normal((classifier_units, width * emb_cols))
        w /= np.sqrt(width * emb_cols)
        b = 0.1 * rng.standard_normal(classifier_units)
        layers.append(DenseLayer(w, b))

    return ModelSpec(
        name=name, input_channels=input_channels, sample_rate_hz=sample_rate_hz,
        window_len=cfg.window_len, step=cfg.step,
        classifier_start=classifier_start, layers=tuple(layers),
    )


def random_signal(rng: np.random.Generator, channels: int, length: int,
                  sample_rate_hz: float = 64.0, noise: float = 0.05) -> Signal:
    """Smooth test signal: a few random sinusoids per channel plus noise."""
    t = np.arange(length, dtype=np.float64) / sample_rate_hz
    samples = np.zeros((channels, length))
    for ch in range(channels):
        for _ in range(4):
            freq = rng.uniform(0.2, sample_rate_hz / 8.0)
            amp = rng.uniform(0.3, 1.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            samples[ch] += amp * np.cos(2.0 * np.pi * freq * t + phase)
        if noise:
            samples[ch] += noise * rng.standard_normal(length)
    return Signal(samples, sample_rate_hz)


# --- wall-clock benchmark -------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    step: int
    window: int
    mode: str
    ns_per_window: float
    ns_per_step: float
    mac_count: int


@dataclass(frozen=True)
class BenchResult:
    rows: tuple[BenchRow, ...]
    fits: dict[str, LineFit]

    def timer_warnings(self) -> list[str]:
        out = []
        for row in self.rows:
            if row.ns_per_step < 1000.0:
                out.append(
                    f"median for mode={row.mode} step={row.step} is "
                    f"{row.ns_per_step:.0f} ns/step; below timer confidence"
                )
        return out


def _median_full_ns(spec: ModelSpec, window: np.ndarray, reps: int) -> float:
    for _ in range(2):
        full_inference(spec, window)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        full_inference(spec, window)
        samples.append(time.perf_counter_ns() - t0)
    return float(np.median(samples))


def _median_push_ns(session: StreamSession, chunks: list[np.ndarray],
                    reps: int) -> float:
    n_block = session.cfg.windows_per_ring
    for chunk in chunks[:n_block]:
        session.push_samples(chunk)  # warm-up: fill ring, touch caches
    samples = []
    idx = 0
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        for _ in range(n_block):
            session.push_samples(chunks[idx % len(chunks)])
            idx += 1
        samples.append((time.perf_counter_ns() - t0) / n_block)
    return float(np.median(samples))


def _stream_total_ns(spec: ModelSpec, cfg: WindowConfig, mode: Mode,
                     chunks: list[np.ndarray], n_pushes: int) -> int:
    session = StreamSession(spec, cfg, mode)
    t0 = time.perf_counter_ns()
    for i in range(n_pushes):
        session.push_samples(chunks[i])
    return time.perf_counter_ns() - t0


def bench_speedup(spec: ModelSpec, steps: list[int], repetitions: int,
                  rng: np.random.Generator,
                  stream_windows: tuple[int, ...] = (2, 4, 6, 8)) -> BenchResult:
    """Time full inference against both streaming modes.

    Per-step rows report the median cost of one push (``ns_per_step``)
    and its per-window equivalent next to the MAC counts; full rows
    repeat the whole-window cost.  The fits regress total streaming wall
    time on total samples ingested (stream lengths of ``stream_windows``
    windows, walked at the smallest step), interleaving the two modes
    within each repetition so clock drift hits both equally.  Each fitted
    point is the repetition minimum — the usual estimator for "how fast
    can this run", immune to one-sided scheduler noise.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if len(stream_windows) < 2:
        raise ConfigError("need at least two stream lengths to fit")
    window_len = spec.window_len
    sig = random_signal(rng, spec.input_channels,
                        window_len * (max(stream_windows) + 1),
                        spec.sample_rate_hz)
    window = sig.samples[:, :window_len]
    rows: list[BenchRow] = []
    for step in steps:
        cfg = WindowConfig(window_len, step)
        n_chunks = cfg.windows_per_ring * 2
        chunks = [
            np.ascontiguousarray(sig.samples[:, i * step:(i + 1) * step])
            for i in range(n_chunks)
        ]
        full_ns = _median_full_ns(spec, window, repetitions)
        rows.append(BenchRow(step, window_len, "full", full_ns, full_ns,
                             mac_count(spec, window_len)))
        for mode, label in ((Mode.EXACT, "exact"), (Mode.APPROXIMATE, "approx")):
            session = StreamSession(spec, cfg, mode)
            push_ns = _median_push_ns(session, chunks, repetitions)
            rows.append(BenchRow(step, window_len, label,
                                 push_ns * cfg.windows_per_ring, push_ns,
                                 mac_count(spec, step, conv_only=True)))

    fit_step = min(steps)
    fit_cfg = WindowConfig(window_len, fit_step)
    sizes = [w * window_len for w in stream_windows]
    fit_chunks = [
        np.ascontiguousarray(sig.samples[:, i * fit_step:(i + 1) * fit_step])
        for i in range(max(sizes) // fit_step)
    ]
    totals: dict[str, dict[int, list[int]]] = {
        "exact": {s: [] for s in sizes}, "approx": {s: [] for s in sizes},
    }
    mode_of = {"exact": Mode.EXACT, "approx": Mode.APPROXIMATE}
    _stream_total_ns(spec, fit_cfg, Mode.EXACT, fit_chunks,
                     sizes[0] // fit_step)  # warm caches once, untimed below
    for rep in range(repetitions):
        order = ("exact", "approx") if rep % 2 == 0 else ("approx", "exact")
        for size in sizes:
            for label in order:
                totals[label][size].append(_stream_total_ns(
                    spec, fit_cfg, mode_of[label], fit_chunks,
                    size // fit_step))
    fits = {}
    for label, by_size in totals.items():
        xs = np.array(sizes, dtype=np.float64)
        ys = np.array([min(by_size[s]) for s in sizes], dtype=np.float64)
        fits[label] = fit_line(xs, ys)
    result = BenchResult(tuple(rows), fits)
    for msg in result.timer_warnings():
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result
