"""Signal containers, windowing, synthetic generators and error metrics.

Samples are stored as float32 arrays shaped ``[channels, time]``.  Metric
arithmetic runs in float64.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    ConfigError,
    ConstantReferenceError,
    EmptyInputError,
    ShapeError,
)


class SignalKind(enum.Enum):
    MONO = "mono"
    MULTI = "multi"


@dataclass(frozen=True)
class Signal:
    """A multi-channel, uniformly sampled signal.

    ``samples`` is coerced to a read-only float32 array of shape
    ``[channels, length]``; a 1-D array is promoted to one channel.
    Instances are immutable and safe to share across sessions.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ShapeError(f"samples must be 1-D or 2-D, got ndim={arr.ndim}")
        arr = np.array(arr, dtype=np.float32, order="C", copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        if not self.sample_rate_hz > 0:
            raise ConfigError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.length / self.sample_rate_hz


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window parameters: length ``window_len``, hop ``step``.

    The step must be a proper divisor of the window length, so consecutive
    windows overlap by ``window_len - step`` samples.
    """

    window_len: int
    step: int

    def __post_init__(self) -> None:
        if self.window_len <= 0:
            raise ConfigError(f"window_len must be positive, got {self.window_len}")
        if not 0 < self.step < self.window_len:
            raise ConfigError(
                f"step must satisfy 0 < step < window_len, got step={self.step} "
                f"window_len={self.window_len}"
            )
        if self.window_len % self.step != 0:
            raise ConfigError(
                f"window_len ({self.window_len}) must be a multiple of step ({self.step})"
            )

    @property
    def windows_per_ring(self) -> int:
        """Number of sub-windows that tile one full window."""
        return self.window_len // self.step


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic cosine test signal.

    ``MONO`` is a single cosine at ``base_freq_hz``.  ``MULTI`` sums
    ``harmonics`` unit-amplitude cosines at integer multiples of the base
    frequency, so its highest component sits at ``harmonics * base_freq_hz``.
    """

    kind: SignalKind
    base_freq_hz: float = 1.0
    harmonics: int = 5
    duration_s: float = 8.0

    def __post_init__(self) -> None:
        if self.base_freq_hz <= 0:
            raise ConfigError(f"base_freq_hz must be > 0, got {self.base_freq_hz}")
        if self.harmonics < 1:
            raise ConfigError(f"harmonics must be >= 1, got {self.harmonics}")
        if self.duration_s <= 0:
            raise ConfigError(f"duration_s must be > 0, got {self.duration_s}")

    @property
    def max_freq_hz(self) -> float:
        if self.kind is SignalKind.MULTI:
            return self.base_freq_hz * self.harmonics
        return self.base_freq_hz


def gen_signal(spec: SyntheticSpec, sample_rate_hz: float) -> Signal:
    """Synthesise the cosine signal described by ``spec``.

    Raises ConfigError if the highest component would violate Nyquist.
    """
    if sample_rate_hz <= 0:
        raise ConfigError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    if spec.max_freq_hz >= sample_rate_hz / 2:
        raise ConfigError(
            f"max component {spec.max_freq_hz} Hz violates Nyquist for "
            f"f_s={sample_rate_hz} Hz"
        )
    n = np.arange(int(round(spec.duration_s * sample_rate_hz)), dtype=np.float64)
    t = n / sample_rate_hz
    if spec.kind is SignalKind.MULTI:
        x = np.zeros_like(t)
        for i in range(1, spec.harmonics + 1):
            x += np.cos(2.0 * np.pi * i * spec.base_freq_hz * t)
    else:
        x = np.cos(2.0 * np.pi * spec.base_freq_hz * t)
    return Signal(x, sample_rate_hz)


def window_iter(signal: Signal, cfg: WindowConfig) -> Iterator[np.ndarray]:
    """Yield ``[channels, window_len]`` views at offsets 0, step, 2*step, ...

    Windows must lie fully inside the signal; a partial tail is never
    emitted.  A signal shorter than one window raises EmptyInputError.
    """
    if signal.length < cfg.window_len:
        raise EmptyInputError(
            f"signal length {signal.length} is shorter than one window "
            f"({cfg.window_len})"
        )
    for start in range(0, signal.length - cfg.window_len + 1, cfg.step):
        yield signal.samples[:, start:start + cfg.window_len]


def sup_amplitude(signal: Signal) -> float:
    """Largest absolute sample value over all channels."""
    if signal.length == 0:
        raise EmptyInputError("cannot take sup amplitude of an empty signal")
    return float(np.abs(signal.samples).max())


def nrmse(reference: np.ndarray, candidate: np.ndarray) -> float:
    """RMSE of (reference - candidate), normalised by the reference range.

    Both arrays must be 1-D of equal length >= 2; a constant reference has
    no range to normalise by and raises ConstantReferenceError.
    """
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.ndim != 1 or cand.ndim != 1:
        raise ShapeError("nrmse expects 1-D arrays")
    if ref.shape != cand.shape:
        raise ShapeError(f"length mismatch: {ref.shape[0]} vs {cand.shape[0]}")
    if ref.shape[0] < 2:
        raise ShapeError("nrmse needs at least two samples")
    rng = float(ref.max() - ref.min())
    if rng == 0.0:
        raise ConstantReferenceError("reference is constant; range is zero")
    return float(np.sqrt(np.mean((ref - cand) ** 2)) / rng)


# --- persistence -----------------------------------------------------------

def save_signal_csv(signal: Signal, path: str | Path) -> None:
    """Write one column per channel with a ``ch0,ch1,...`` header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"ch{i}" for i in range(signal.channels)])
        for row in signal.samples.T:
            writer.writerow([repr(float(v)) for v in row])


def load_signal_csv(path: str | Path, sample_rate_hz: float) -> Signal:
    """Read a ``ch0,ch1,...`` CSV written by :func:`save_signal_csv`.

    The CSV format does not carry a sample rate, so the caller supplies it.
    """
    path = Path(path)
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path} is empty") from None
        expected = [f"ch{i}" for i in range(len(header))]
        if header != expected:
            raise ShapeError(f"{path}: bad header {header!r}, expected {expected!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise EmptyInputError(f"{path} has a header but no samples")
    return Signal(np.array(rows, dtype=np.float64).T, sample_rate_hz)


def save_signal_raw(signal: Signal, path: str | Path) -> None:
    """Write little-endian float32 samples plus a JSON sidecar.

    The blob is ``[channels, length]`` in C order; the sidecar at
    ``<path>.json`` records ``channels``, ``length`` and ``sample_rate_hz``.
    """
    path = Path(path)
    path.write_bytes(signal.samples.astype("<f4").tobytes(order="C"))
    sidecar = {
        "channels": signal.channels,
        "length": signal.length,
        "sample_rate_hz": signal.sample_rate_hz,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_signal_raw(path: str | Path) -> Signal:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise EmptyInputError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    for key in ("channels", "length", "sample_rate_hz"):
        if key not in meta:
            raise ShapeError(f"sidecar {sidecar_path} lacks {key!r}")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = int(meta["channels"]) * int(meta["length"])
    if raw.size != expected:
        raise ShapeError(
            f"{path}: blob holds {raw.size} floats, sidecar promises {expected}"
        )
    samples = raw.reshape(int(meta["channels"]), int(meta["length"]))
    return Signal(samples, float(meta["sample_rate_hz"]))
