"""Streaming inference sessions.

A session feeds ``step``-sized chunks through the feature extractor and
keeps the last ``window_len / step`` sub-embeddings in a FIFO ring; their
concatenation reproduces the full-window embedding, so the classifier can
run on every push once the ring has filled.

Two modes:

* ``EXACT`` — each conv keeps a pad-state buffer of its trailing input
  samples, so chunked evaluation equals one long convolution over the
  stream (true signal padding).
* ``APPROXIMATE`` — convs zero-pad every chunk; no state is kept.  Cheaper
  and stateless, at the price of boundary error in each sub-embedding.

Pooling grids are anchored to the stream start via small carry buffers.
With an aligned step the carries stay empty; a misaligned step (forced
past the alignment gate) drifts against the per-window pooling grid, which
is exactly the degradation the alignment check guards against.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ShapeError
from .layers import ConvLayer, PadState, PoolLayer
from .model import (
    Embedding,
    ModelSpec,
    alignment_check,
    cumulative_pool_factor,
    run_classifier,
    run_feature_extractor,
)
from .signals import WindowConfig


class Mode(enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approx"


@dataclass(frozen=True)
class StreamOutput:
    """Result of one push: aggregated embedding so far, classifier output
    (None while warming up), and the warm-up flag itself."""

    embedding: Embedding
    classifier_output: np.ndarray | None
    warmup: bool


class StreamSession:
    """Stateful streaming evaluator for one model and window config.

    Construction refuses a step the pooling chain cannot divide unless
    ``force_misaligned`` is set, mirroring the alignment report.
    """

    def __init__(self, spec: ModelSpec, cfg: WindowConfig, mode: Mode,
                 force_misaligned: bool = False):
        report = alignment_check(cfg, spec)
        if not report.aligned and not force_misaligned:
            stage = report.first_misaligned()
            raise AlignmentError(
                f"step {cfg.step} misaligned at layer {stage.layer_index}: "
                f"pool_len {stage.pool_len} does not divide entering length "
                f"{stage.entering_len} (pass force_misaligned to override)",
                layer_index=stage.layer_index, pool_len=stage.pool_len,
                entering_len=stage.entering_len,
            )
        self.spec = spec
        self.cfg = cfg
        self.mode = mode
        self.alignment = report
        self._pool_factor = cumulative_pool_factor(spec)
        self._convs = [l for l in spec.feature_layers if isinstance(l, ConvLayer)]
        self._pools = [l for l in spec.feature_layers if isinstance(l, PoolLayer)]
        self._pool_channels = self._channels_at_pools()
        self.pad_states: list[PadState] | None = None
        if mode is Mode.EXACT:
            self.pad_states = [PadState.zeros(l) for l in self._convs]
        self.pool_carries = [
            np.zeros((ch, 0), dtype=np.float32) for ch in self._pool_channels
        ]
        self.agg_ring: deque[np.ndarray] = deque(maxlen=cfg.windows_per_ring)
        self.sub_windows_seen = 0

    def _channels_at_pools(self) -> list[int]:
        ch = self.spec.input_channels
        out = []
        for layer in self.spec.feature_layers:
            if isinstance(layer, ConvLayer):
                ch = layer.out_channels
            elif isinstance(layer, PoolLayer):
                out.append(ch)
        return out

    # -- lifecycle ---------------------------------------------------------

    def push_samples(self, chunk: np.ndarray) -> StreamOutput:
        """Advance the stream by one ``[input_channels, step]`` chunk."""
        chunk = np.asarray(chunk, dtype=np.float32)
        if chunk.shape != (self.spec.input_channels, self.cfg.step):
            raise ShapeError(
                f"chunk must be [{self.spec.input_channels}, {self.cfg.step}], "
                f"got {chunk.shape}"
            )
        sub = run_feature_extractor(
            self.spec, chunk,
            conv_states=self.pad_states,
            pool_carries=self.pool_carries,
        )
        self.agg_ring.append(sub)
        self.sub_windows_seen += 1
        warmup = self.sub_windows_seen < self.cfg.windows_per_ring
        agg = np.concatenate(list(self.agg_ring), axis=1)
        out = None if warmup else run_classifier(self.spec, agg)
        return StreamOutput(Embedding(agg), out, warmup)

    def reset(self) -> None:
        """Return to the cold-start state: zero pads, empty ring and carries."""
        if self.pad_states is not None:
            for state in self.pad_states:
                state.buffer = np.zeros_like(state.buffer)
        for i, ch in enumerate(self._pool_channels):
            self.pool_carries[i] = np.zeros((ch, 0), dtype=np.float32)
        self.agg_ring.clear()
        self.sub_windows_seen = 0

    def memory_footprint(self) -> dict[str, int]:
        """Exact byte counts of the persistent buffers.

        ``pad_bytes`` is zero in approximate mode by construction —
        there are no conv states to account for.
        """
        pad_bytes = 0
        if self.pad_states is not None:
            pad_bytes = sum(s.buffer.nbytes for s in self.pad_states)
        ring_cols = self.cfg.window_len // self._pool_factor
        ring_bytes = self.spec.embedding_channels * ring_cols * 4
        return {"pad_bytes": pad_bytes, "ring_bytes": ring_bytes}


def session_new(spec: ModelSpec, cfg: WindowConfig, mode: Mode,
                force_misaligned: bool = False) -> StreamSession:
    """Convenience constructor mirroring the session lifecycle verbs."""
    return StreamSession(spec, cfg, mode, force_misaligned=force_misaligned)
