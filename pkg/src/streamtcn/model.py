"""Model description, manifest/weight persistence and full-window inference.

A model is a feature extractor ``h`` (conv / relu / batch-norm / pool)
followed by a classifier ``g`` (flatten, then dense / relu).  The split
index ``classifier_start`` is part of the model description: streaming
runs ``h`` on sub-windows and ``g`` once per aggregated window.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import AlignmentError, ConfigError, ManifestError, ShapeError
from .layers import (
    BatchNormParams,
    ConvLayer,
    DenseLayer,
    FlattenLayer,
    PadState,
    PoolKind,
    PoolLayer,
    ReluLayer,
    batchnorm_apply,
    conv1d_causal,
    dense_apply,
    pool,
    relu,
)
from .signals import WindowConfig

Layer = Union[ConvLayer, ReluLayer, BatchNormParams, PoolLayer, FlattenLayer, DenseLayer]

_FEATURE_KINDS = (ConvLayer, ReluLayer, BatchNormParams, PoolLayer)


@dataclass(frozen=True)
class Embedding:
    """Feature-extractor output: ``[channels, temporal_len]`` float32."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeError(f"embedding must be 2-D, got ndim={arr.ndim}")
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def temporal_len(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Immutable model description plus its recommended window config.

    Validation walks the layer chain once: channel counts must chain
    through ``h``, the window length must survive every pooling stage, and
    the classifier may only contain a leading flatten plus dense/relu.
    """

    name: str
    input_channels: int
    sample_rate_hz: float
    window_len: int
    step: int
    classifier_start: int
    layers: tuple[Layer, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_channels < 1:
            raise ConfigError(f"input_channels must be >= 1, got {self.input_channels}")
        if self.sample_rate_hz <= 0:
            raise ConfigError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        WindowConfig(self.window_len, self.step)  # validates the pair
        if not 0 <= self.classifier_start <= len(self.layers):
            raise ConfigError(
                f"classifier_start {self.classifier_start} outside "
                f"[0, {len(self.layers)}]"
            )
        self._validate_chain()

    # -- structure ---------------------------------------------------------

    @property
    def feature_layers(self) -> tuple[Layer, ...]:
        return self.layers[: self.classifier_start]

    @property
    def classifier_layers(self) -> tuple[Layer, ...]:
        return self.layers[self.classifier_start:]

    def _validate_chain(self) -> None:
        ch = self.input_channels
        t_len = self.window_len
        for i, layer in enumerate(self.feature_layers):
            if not isinstance(layer, _FEATURE_KINDS):
                raise ConfigError(
                    f"layer {i} ({type(layer).__name__}) not allowed before "
                    f"classifier_start"
                )
            if isinstance(layer, ConvLayer):
                if layer.in_channels != ch:
                    raise ConfigError(
                        f"layer {i}: conv expects {layer.in_channels} channels, "
                        f"chain carries {ch}"
                    )
                ch = layer.out_channels
            elif isinstance(layer, BatchNormParams):
                if layer.channels != ch:
                    raise ConfigError(
                        f"layer {i}: batchnorm over {layer.channels} channels, "
                        f"chain carries {ch}"
                    )
            elif isinstance(layer, PoolLayer):
                if t_len % layer.pool_len != 0:
                    raise AlignmentError(
                        f"layer {i}: pool_len {layer.pool_len} does not divide "
                        f"window-level length {t_len}",
                        layer_index=i, pool_len=layer.pool_len, entering_len=t_len,
                    )
                t_len //= layer.pool_len

        tail = self.classifier_layers
        if tail:
            if not isinstance(tail[0], FlattenLayer):
                raise ConfigError("classifier must start with a flatten layer")
            units = ch * t_len
            for j, layer in enumerate(tail[1:], start=self.classifier_start + 1):
                if isinstance(layer, DenseLayer):
                    if layer.in_units != units:
                        raise ConfigError(
                            f"layer {j}: dense expects {layer.in_units} inputs, "
                            f"chain carries {units}"
                        )
                    units = layer.out_units
                elif isinstance(layer, ReluLayer):
                    pass
                else:
                    raise ConfigError(
                        f"layer {j} ({type(layer).__name__}) not allowed in classifier"
                    )

    @property
    def embedding_channels(self) -> int:
        ch = self.input_channels
        for layer in self.feature_layers:
            if isinstance(layer, ConvLayer):
                ch = layer.out_channels
        return ch

    @property
    def output_units(self) -> int | None:
        units = None
        for layer in self.classifier_layers:
            if isinstance(layer, DenseLayer):
                units = layer.out_units
        return units


def cumulative_pool_factor(spec: ModelSpec) -> int:
    """Product of all pooling lengths in the feature extractor."""
    p = 1
    for layer in spec.feature_layers:
        if isinstance(layer, PoolLayer):
            p *= layer.pool_len
    return p


def receptive_field(spec: ModelSpec) -> int:
    """Input samples influencing one output of the deepest conv layer.

    Each layer widens the field by (kernel span - 1) times the input-rate
    stride accumulated so far; pooling stages past the deepest conv are
    irrelevant to it and are excluded.
    """
    last_conv = -1
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, ConvLayer):
            last_conv = i
    if last_conv < 0:
        return 1
    r = 1
    jump = 1
    for layer in spec.feature_layers[: last_conv + 1]:
        if isinstance(layer, ConvLayer):
            r += (layer.kernel_size - 1) * layer.dilation * jump
        elif isinstance(layer, PoolLayer):
            r += (layer.pool_len - 1) * jump
            jump *= layer.pool_len
    return r


@dataclass(frozen=True)
class ContaminationRow:
    """Upper bound on left-boundary corruption after one layer."""

    layer_index: int
    temporal_len: int
    affected: int


def contamination_profile(spec: ModelSpec, input_len: int | None = None
                          ) -> tuple[ContaminationRow, ...]:
    """Track how many leading samples each layer can corrupt under zero padding.

    Convs extend the corrupted prefix by ``pad_len``; pooling divides it,
    rounding up (a partially corrupted group counts as corrupted).  For
    pooling-free stacks the count is exact; with pooling it is an upper
    bound.  ``input_len=None`` leaves counts uncapped by the window length.
    """
    t_len = input_len if input_len is not None else spec.window_len
    capped = input_len is not None
    c = 0
    rows = []
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, ConvLayer):
            c += layer.pad_len
        elif isinstance(layer, PoolLayer):
            c = math.ceil(c / layer.pool_len)
            t_len //= layer.pool_len
        if capped:
            c = min(c, t_len)
        rows.append(ContaminationRow(i, t_len, c))
    return tuple(rows)


def min_context_len(spec: ModelSpec) -> int:
    """Shortest left context (in input samples) that clears the oracle.

    Covers both the deepest conv's receptive field and the zero-padding
    contamination reach of the whole extractor, rounded up to a multiple of
    the cumulative pool factor so the discarded embedding prefix is whole.
    """
    p = cumulative_pool_factor(spec)
    cols_rf = math.ceil(max(receptive_field(spec) - 1, 0) / p)
    profile = contamination_profile(spec, input_len=None)
    cols_probe = profile[-1].affected if profile else 0
    return max(cols_rf, cols_probe) * p


@dataclass(frozen=True)
class StageAlignment:
    layer_index: int
    pool_len: int
    entering_len: int
    divisible: bool


@dataclass(frozen=True)
class AlignmentReport:
    aligned: bool
    stages: tuple[StageAlignment, ...]

    def first_misaligned(self) -> StageAlignment | None:
        for stage in self.stages:
            if not stage.divisible:
                return stage
        return None


def alignment_check(cfg: WindowConfig, spec: ModelSpec) -> AlignmentReport:
    """Check that a step of ``cfg.step`` samples survives every pooling stage.

    A stage is aligned when the sub-window length reaching it divides by its
    pool length; equivalently the step must be a multiple of every prefix
    pool product.
    """
    entering = cfg.step
    stages = []
    aligned = True
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, PoolLayer):
            ok = entering % layer.pool_len == 0
            stages.append(StageAlignment(i, layer.pool_len, entering, ok))
            aligned = aligned and ok
            entering //= layer.pool_len
    return AlignmentReport(aligned, tuple(stages))


# --- inference ------------------------------------------------------------

def run_feature_extractor(spec: ModelSpec, x: np.ndarray,
                          conv_states: list[PadState] | None = None,
                          pool_carries: list[np.ndarray] | None = None
                          ) -> np.ndarray:
    """Run ``h`` over ``[input_channels, T]``.

    Stateless by default (zero padding, strict pooling).  A streaming
    session passes its per-conv pad states and per-pool carry buffers; the
    carries hold samples that have not yet filled a pooling group, keeping
    the pooling grid anchored to the start of the stream.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] != spec.input_channels:
        raise ShapeError(
            f"input must be [{spec.input_channels}, T], got {x.shape}"
        )
    ci = 0
    pi = 0
    for layer in spec.feature_layers:
        if isinstance(layer, ConvLayer):
            state = conv_states[ci] if conv_states is not None else None
            x = conv1d_causal(x, layer, state)
            ci += 1
        elif isinstance(layer, ReluLayer):
            x = relu(x)
        elif isinstance(layer, BatchNormParams):
            x = batchnorm_apply(x, layer)
        elif isinstance(layer, PoolLayer):
            if pool_carries is None:
                x = pool(x, layer)
            else:
                joined = np.concatenate([pool_carries[pi], x], axis=1)
                keep = (joined.shape[1] // layer.pool_len) * layer.pool_len
                pool_carries[pi] = joined[:, keep:].copy()
                x = pool(joined[:, :keep], layer)
                pi += 1
    return x


def run_classifier(spec: ModelSpec, embedding_values: np.ndarray) -> np.ndarray | None:
    """Run ``g`` on an aggregated embedding; None when there is no classifier."""
    tail = spec.classifier_layers
    if not tail:
        return None
    x: np.ndarray | None = None
    for layer in tail:
        if isinstance(layer, FlattenLayer):
            x = np.ascontiguousarray(embedding_values, dtype=np.float32).ravel(order="C")
        elif isinstance(layer, DenseLayer):
            x = dense_apply(x, layer)
        elif isinstance(layer, ReluLayer):
            x = np.maximum(x, np.float32(0.0))
    return x


def full_inference(spec: ModelSpec, window: np.ndarray
                   ) -> tuple[Embedding, np.ndarray | None]:
    """Zero-padded inference over one whole window.

    Accepts any window length the pooling chain divides; the classifier
    only runs when the flattened embedding matches its expected width
    (always true at the model's declared window length).
    """
    emb = Embedding(run_feature_extractor(spec, window))
    out = None
    tail = spec.classifier_layers
    if tail:
        dense_in = next(
            (l.in_units for l in tail if isinstance(l, DenseLayer)), None
        )
        if dense_in is None or dense_in == emb.values.size:
            out = run_classifier(spec, emb.values)
    return emb, out


def extended_window_oracle(spec: ModelSpec, context: np.ndarray,
                           window: np.ndarray) -> Embedding:
    """Ground-truth steady-state embedding for one window.

    Runs ``h`` zero-padded over ``[context | window]`` and discards the
    embedding columns produced by the context, leaving exactly what an
    ideally buffered streaming pass would emit for the window.
    """
    context = np.asarray(context, dtype=np.float32)
    window = np.asarray(window, dtype=np.float32)
    if context.ndim != 2 or context.shape[0] != spec.input_channels:
        raise ShapeError(f"context must be [{spec.input_channels}, L_a]")
    if window.ndim != 2 or window.shape[0] != spec.input_channels:
        raise ShapeError(f"window must be [{spec.input_channels}, L]")
    p = cumulative_pool_factor(spec)
    l_a = context.shape[1]
    if l_a % p != 0:
        raise ConfigError(f"context length {l_a} must be a multiple of {p}")
    if l_a < min_context_len(spec):
        raise ConfigError(
            f"context length {l_a} is below the minimum {min_context_len(spec)}"
        )
    stacked = np.concatenate([context, window], axis=1)
    emb = run_feature_extractor(spec, stacked)
    return Embedding(emb[:, l_a // p:])


def mac_count(spec: ModelSpec, input_len: int, conv_only: bool = False) -> int:
    """Multiply-accumulate count of one pass over ``input_len`` samples.

    Conv layers contribute out*in*kernel per retained time step; dense
    layers contribute out*in once per pass (skipped with ``conv_only``).
    """
    t_len = input_len
    total = 0
    for i, layer in enumerate(spec.feature_layers):
        if isinstance(layer, ConvLayer):
            total += layer.out_channels * layer.in_channels * layer.kernel_size * t_len
        elif isinstance(layer, PoolLayer):
            if t_len % layer.pool_len != 0:
                raise AlignmentError(
                    f"layer {i}: pool_len {layer.pool_len} does not divide {t_len}",
                    layer_index=i, pool_len=layer.pool_len, entering_len=t_len,
                )
            t_len //= layer.pool_len
    if not conv_only:
        for layer in spec.classifier_layers:
            if isinstance(layer, DenseLayer):
                total += layer.out_units * layer.in_units
    return total


# --- persistence ----------------------------------------------------------

_MANIFEST_KEYS = (
    "name", "input_channels", "sample_rate_hz", "window_len", "step",
    "classifier_start", "layers", "weights_file", "weights_sha256",
)


def _layer_entry(layer: Layer) -> dict:
    if isinstance(layer, ConvLayer):
        return {"type": "conv", "kernel": layer.kernel_size,
                "dilation": layer.dilation, "in_ch": layer.in_channels,
                "out_ch": layer.out_channels}
    if isinstance(layer, ReluLayer):
        return {"type": "relu"}
    if isinstance(layer, BatchNormParams):
        return {"type": "batchnorm", "channels": layer.channels}
    if isinstance(layer, PoolLayer):
        return {"type": "pool", "kind": layer.kind.value, "len": layer.pool_len}
    if isinstance(layer, FlattenLayer):
        return {"type": "flatten"}
    if isinstance(layer, DenseLayer):
        return {"type": "dense", "in_units": layer.in_units,
                "out_units": layer.out_units}
    raise ManifestError(f"unknown layer type {type(layer).__name__}")


def _layer_params(layer: Layer) -> list[np.ndarray]:
    """Parameter arrays in their serialised order."""
    if isinstance(layer, ConvLayer):
        return [layer.weights, layer.bias]
    if isinstance(layer, BatchNormParams):
        return [layer.scale, layer.shift]
    if isinstance(layer, DenseLayer):
        return [layer.weights, layer.bias]
    return []


def weights_blob(spec: ModelSpec) -> bytes:
    """Concatenated little-endian float32 parameters in manifest order."""
    parts = []
    for layer in spec.layers:
        for arr in _layer_params(layer):
            parts.append(arr.astype("<f4").tobytes(order="C"))
    return b"".join(parts)


def save_model(spec: ModelSpec, manifest_path: str | Path,
               weights_file: str | None = None) -> Path:
    """Write the manifest JSON and its weight blob next to it."""
    manifest_path = Path(manifest_path)
    if weights_file is None:
        weights_file = manifest_path.stem + ".weights.bin"
    blob = weights_blob(spec)
    (manifest_path.parent / weights_file).write_bytes(blob)
    manifest = {
        "name": spec.name,
        "input_channels": spec.input_channels,
        "sample_rate_hz": spec.sample_rate_hz,
        "window_len": spec.window_len,
        "step": spec.step,
        "classifier_start": spec.classifier_start,
        "layers": [_layer_entry(l) for l in spec.layers],
        "weights_file": weights_file,
        "weights_sha256": hashlib.sha256(blob).hexdigest(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _require(entry: dict, key: str, where: str):
    if key not in entry:
        raise ManifestError(f"{where}: missing key {key!r}")
    return entry[key]


def load_model(manifest_path: str | Path) -> ModelSpec:
    """Load a manifest and its weight blob, verifying size and SHA-256.

    Unknown extra top-level keys (e.g. exporter provenance) are ignored.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in _MANIFEST_KEYS:
        _require(manifest, key, str(manifest_path))

    blob_path = manifest_path.parent / manifest["weights_file"]
    if not blob_path.exists():
        raise ManifestError(f"weight blob {blob_path} not found")
    blob = blob_path.read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["weights_sha256"]:
        raise ManifestError(
            f"{blob_path}: SHA-256 mismatch (manifest {manifest['weights_sha256']}, "
            f"blob {digest})"
        )

    flat = np.frombuffer(blob, dtype="<f4")
    cursor = 0

    def take(*shape: int) -> np.ndarray:
        nonlocal cursor
        n = int(np.prod(shape))
        if cursor + n > flat.size:
            raise ManifestError("weight blob too short for declared layers")
        arr = flat[cursor:cursor + n].reshape(shape)
        cursor += n
        return arr

    layers: list[Layer] = []
    for k, entry in enumerate(manifest["layers"]):
        kind = _require(entry, "type", f"layer {k}")
        if kind == "conv":
            out_ch = _require(entry, "out_ch", f"layer {k}")
            in_ch = _require(entry, "in_ch", f"layer {k}")
            m = _require(entry, "kernel", f"layer {k}")
            layers.append(ConvLayer(take(out_ch, in_ch, m), take(out_ch),
                                    dilation=_require(entry, "dilation", f"layer {k}")))
        elif kind == "relu":
            layers.append(ReluLayer())
        elif kind == "batchnorm":
            ch = _require(entry, "channels", f"layer {k}")
            layers.append(BatchNormParams(take(ch), take(ch)))
        elif kind == "pool":
            try:
                pk = PoolKind(_require(entry, "kind", f"layer {k}"))
            except ValueError as exc:
                raise ManifestError(f"layer {k}: unknown pool kind") from exc
            layers.append(PoolLayer(pk, _require(entry, "len", f"layer {k}")))
        elif kind == "flatten":
            layers.append(FlattenLayer())
        elif kind == "dense":
            out_u = _require(entry, "out_units", f"layer {k}")
            in_u = _require(entry, "in_units", f"layer {k}")
            layers.append(DenseLayer(take(out_u, in_u), take(out_u)))
        else:
            raise ManifestError(f"layer {k}: unknown type {kind!r}")

    if cursor != flat.size:
        raise ManifestError(
            f"weight blob holds {flat.size} floats, layers consume {cursor}"
        )
    try:
        return ModelSpec(
            name=manifest["name"],
            input_channels=manifest["input_channels"],
            sample_rate_hz=manifest["sample_rate_hz"],
            window_len=manifest["window_len"],
            step=manifest["step"],
            classifier_start=manifest["classifier_start"],
            layers=tuple(layers),
        )
    except (ConfigError, AlignmentError, ShapeError) as exc:
        raise ManifestError(f"{manifest_path}: {exc}") from exc
