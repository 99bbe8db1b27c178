"""Streaming inference for 1D temporal CNNs.

Sliding-window CNNs recompute the whole window at every step even though
consecutive windows overlap.  This package streams them instead: the
feature extractor runs once per step-sized chunk, sub-embeddings are kept
in a FIFO ring whose concatenation equals the full-window embedding, and
the classifier head runs on the aggregate.  Exact mode buffers each
conv's trailing context (signal padding); approximate mode zero-pads each
chunk and keeps no state.  The analysis tools quantify when that is safe:
pooling shift-error bounds, alignment checks, and a probe for how far
zero-padding corruption reaches into a trained extractor.
"""

from .analysis import (
    PoolStageBound,
    PoolingBoundInput,
    ProbeReport,
    ProbeRow,
    Recommendation,
    ShiftError,
    ShiftabilityReport,
    SweepResult,
    consecutive_sample_bound,
    empirical_pool_shift_error,
    pooling_error_bound,
    shiftability_report,
    sweep_fs,
    sweep_pool_len,
    zero_padding_probe,
)
from .bench import (
    BenchResult,
    BenchRow,
    LineFit,
    bench_speedup,
    fit_line,
    random_model,
    random_signal,
)
from .errors import (
    AlignmentError,
    ConfigError,
    ConstantReferenceError,
    EmptyInputError,
    EngineError,
    ManifestError,
    ShapeError,
    StateError,
    UnsupportedLayerError,
)
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
    fold_batchnorm,
    pool,
    relu,
)
from .model import (
    Embedding,
    ModelSpec,
    alignment_check,
    contamination_profile,
    cumulative_pool_factor,
    extended_window_oracle,
    full_inference,
    load_model,
    mac_count,
    min_context_len,
    receptive_field,
    run_classifier,
    run_feature_extractor,
    save_model,
)
from .signals import (
    Signal,
    SignalKind,
    SyntheticSpec,
    WindowConfig,
    gen_signal,
    load_signal_csv,
    load_signal_raw,
    nrmse,
    save_signal_csv,
    save_signal_raw,
    sup_amplitude,
    window_iter,
)
from .streaming import Mode, StreamOutput, StreamSession, session_new

__version__ = "0.1.0"
