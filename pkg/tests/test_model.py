import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from streamtcn import (
    AlignmentError,
    BatchNormParams,
    ConfigError,
    ConvLayer,
    DenseLayer,
    Embedding,
    FlattenLayer,
    ManifestError,
    ModelSpec,
    PoolKind,
    PoolLayer,
    ReluLayer,
    ShapeError,
    alignment_check,
    cumulative_pool_factor,
    extended_window_oracle,
    full_inference,
    load_model,
    mac_count,
    min_context_len,
    receptive_field,
    save_model,
    WindowConfig,
)
from streamtcn.model import contamination_profile, run_classifier, weights_blob
from streamtcn.reference import build_h_acc, build_h_eeg, build_h_ppg


def conv_of(rng, in_ch, out_ch, kernel, dilation=1, positive=False):
    if positive:
        w = rng.uniform(0.5, 1.5, (out_ch, in_ch, kernel)).astype(np.float32)
    else:
        w = rng.standard_normal((out_ch, in_ch, kernel)).astype(np.float32)
    return ConvLayer(w, np.zeros(out_ch, np.float32), dilation=dilation)


def extractor_spec(layers, in_ch=1, window=64, step=16, name="t"):
    return ModelSpec(name, in_ch, 32.0, window, step, len(layers), tuple(layers))


# --- validation -----------------------------------------------------------

def test_embedding_shape_and_props():
    emb = Embedding(np.zeros((3, 8)))
    assert emb.channels == 3
    assert emb.temporal_len == 8
    with pytest.raises(ShapeError):
        Embedding(np.zeros(8))


def test_chain_rejects_channel_break():
    rng = np.random.default_rng(0)
    layers = [conv_of(rng, 1, 4, 3), conv_of(rng, 8, 4, 3)]  # 4 != 8
    with pytest.raises(ConfigError):
        extractor_spec(layers)


def test_chain_rejects_pool_that_cannot_divide():
    rng = np.random.default_rng(0)
    layers = [conv_of(rng, 1, 4, 3), PoolLayer(PoolKind.MAX, 7)]
    with pytest.raises(AlignmentError):
        extractor_spec(layers, window=64, step=16)


def test_classifier_must_open_with_flatten():
    rng = np.random.default_rng(0)
    conv = conv_of(rng, 1, 4, 3)
    dense = DenseLayer(np.zeros((2, 4 * 64), np.float32), np.zeros(2, np.float32))
    with pytest.raises(ConfigError):
        ModelSpec("t", 1, 32.0, 64, 16, 1, (conv, dense))


def test_classifier_dense_width_checked():
    rng = np.random.default_rng(0)
    conv = conv_of(rng, 1, 4, 3)
    dense = DenseLayer(np.zeros((2, 99), np.float32), np.zeros(2, np.float32))
    with pytest.raises(ConfigError):
        ModelSpec("t", 1, 32.0, 64, 16, 1, (conv, FlattenLayer(), dense))


def test_conv_banned_after_classifier_start():
    rng = np.random.default_rng(0)
    conv = conv_of(rng, 1, 4, 3)
    with pytest.raises(ConfigError):
        ModelSpec("t", 1, 32.0, 64, 16, 1, (conv, FlattenLayer(), conv_of(rng, 4, 4, 3)))


# --- structure queries ----------------------------------------------------

def test_identity_model_embeds_input():
    layer = ConvLayer(np.ones((1, 1, 1), np.float32), np.zeros(1, np.float32), 1)
    spec = extractor_spec([layer])
    x = np.random.default_rng(1).standard_normal((1, 64)).astype(np.float32)
    emb, out = full_inference(spec, x)
    assert out is None
    assert_array_equal(emb.values, x)


@pytest.mark.parametrize("pools,want", [((), 1), ((2, 2, 2), 8), ((4, 2), 8)])
def test_cumulative_pool_factor(pools, want):
    rng = np.random.default_rng(2)
    layers = [conv_of(rng, 1, 2, 3)]
    for p in pools:
        layers.append(PoolLayer(PoolKind.AVERAGE, p))
    spec = extractor_spec(layers)
    assert cumulative_pool_factor(spec) == want


def test_receptive_field_closed_forms():
    rng = np.random.default_rng(3)
    assert receptive_field(extractor_spec([conv_of(rng, 1, 2, 3)])) == 3

    six = [conv_of(rng, 1 if i == 0 else 4, 4, 3) for i in range(6)]
    assert receptive_field(extractor_spec(six)) == 13

    # conv3 -> pool2 -> conv3: the second conv's three pooled taps cover six
    # consecutive pre-pool positions, whose first-conv fields span inputs
    # [2q-6, 2q+1] -- eight samples (the pool itself widens the field by
    # pool_len-1 before doubling the jump).
    sandwich = [conv_of(rng, 1, 2, 3), PoolLayer(PoolKind.AVERAGE, 2),
                conv_of(rng, 2, 2, 3)]
    assert receptive_field(extractor_spec(sandwich)) == 8
    assert measured_receptive_field(extractor_spec(sandwich), 64) == 8


def last_output_col(spec, x):
    from streamtcn.model import run_feature_extractor
    return run_feature_extractor(spec, x)[:, -1]


def measured_receptive_field(spec, t_len):
    """Impulse-probe oracle: span of input positions that move the last output.

    Dilated kernels leave holes in the support, so the field is the span
    from the oldest influencing sample to the newest (always the current
    one).  Works for linear extractors (convs + average pools) with
    positive weights, where no cancellation can hide a dependency.
    """
    base = last_output_col(spec, np.zeros((spec.input_channels, t_len), np.float32))
    oldest = None
    for p in range(t_len):
        x = np.zeros((spec.input_channels, t_len), np.float32)
        x[:, p] = 1.0
        if np.any(np.abs(last_output_col(spec, x) - base) > 0):
            oldest = p
            break
    assert oldest is not None, "no input position influences the output"
    return t_len - oldest


def test_receptive_field_matches_impulse_probe():
    rng = np.random.default_rng(4)
    for arch in range(20):
        depth = int(rng.integers(1, 5))
        layers = []
        in_ch = 1
        n_pools = 0
        for i in range(depth):
            kernel = int(rng.choice([3, 5]))
            dilation = int(rng.choice([1, 2]))
            layers.append(conv_of(rng, in_ch, 2, kernel, dilation, positive=True))
            in_ch = 2
            if i < depth - 1 and rng.random() < 0.4:
                layers.append(PoolLayer(PoolKind.AVERAGE, 2))
                n_pools += 1
        factor = 2 ** n_pools
        spec = extractor_spec(layers, window=64 * factor, step=16 * factor)
        r0 = receptive_field(spec)
        t_len = max(64 * factor, ((r0 // factor) + 2) * factor)
        assert measured_receptive_field(spec, t_len) == r0, f"arch {arch}"


# --- alignment ------------------------------------------------------------

def test_alignment_examples():
    rng = np.random.default_rng(5)
    pooled = extractor_spec(
        [conv_of(rng, 1, 2, 3), PoolLayer(PoolKind.MAX, 2),
         PoolLayer(PoolKind.MAX, 2), PoolLayer(PoolKind.MAX, 2)],
        window=256, step=64)
    assert alignment_check(WindowConfig(256, 64), pooled).aligned

    single = extractor_spec([conv_of(rng, 1, 2, 3), PoolLayer(PoolKind.MAX, 2)],
                            window=6, step=3)
    report = alignment_check(WindowConfig(6, 3), single)
    assert not report.aligned
    stage = report.first_misaligned()
    assert stage.pool_len == 2 and stage.entering_len == 3

    bare = extractor_spec([conv_of(rng, 1, 2, 3)], window=60, step=5)
    assert alignment_check(WindowConfig(60, 5), bare).aligned


def test_alignment_catches_second_stage():
    # step 4 survives the first pool (4/2=2) but not the second (2 % 4 != 0)
    rng = np.random.default_rng(6)
    spec = extractor_spec(
        [conv_of(rng, 1, 2, 3), PoolLayer(PoolKind.MAX, 2),
         conv_of(rng, 2, 2, 3), PoolLayer(PoolKind.MAX, 4)],
        window=32, step=4)
    report = alignment_check(WindowConfig(32, 4), spec)
    assert not report.aligned
    assert report.first_misaligned().pool_len == 4


# --- oracle ---------------------------------------------------------------

def test_oracle_zero_context_is_full_inference():
    rng = np.random.default_rng(7)
    spec = extractor_spec(
        [conv_of(rng, 1, 4, 5, 2), ReluLayer(), PoolLayer(PoolKind.AVERAGE, 2),
         conv_of(rng, 4, 4, 3), ReluLayer()],
        window=64, step=16)
    x = rng.standard_normal((1, 64)).astype(np.float32)
    ctx = np.zeros((1, min_context_len(spec)), np.float32)
    emb, _ = full_inference(spec, x)
    assert_array_equal(extended_window_oracle(spec, ctx, x).values, emb.values)


def test_oracle_shift_equivariance_on_stream():
    rng = np.random.default_rng(8)
    spec = extractor_spec(
        [conv_of(rng, 1, 4, 3), ReluLayer(), PoolLayer(PoolKind.MAX, 2)],
        window=32, step=8)
    stream = rng.standard_normal((1, 512)).astype(np.float32)
    la = min_context_len(spec)
    s = 8
    a = extended_window_oracle(spec, stream[:, 64 - la:64], stream[:, 64:96])
    b = extended_window_oracle(spec, stream[:, 64 + s - la:64 + s],
                               stream[:, 64 + s:96 + s])
    # overlap of the two pooled windows must agree exactly
    assert_array_equal(a.values[:, s // 2:], b.values[:, :-(s // 2)])


def test_oracle_context_beyond_receptive_field_is_inert():
    rng = np.random.default_rng(9)
    spec = extractor_spec([conv_of(rng, 1, 4, 5, 2), ReluLayer(),
                           conv_of(rng, 4, 4, 3)], window=64, step=16)
    la = min_context_len(spec)
    stream = rng.standard_normal((1, 4 * la + 64)).astype(np.float32)
    win = stream[:, -64:]
    short = extended_window_oracle(spec, stream[:, -64 - la:-64], win)
    long = extended_window_oracle(spec, stream[:, -64 - 3 * la:-64], win)
    assert_array_equal(short.values, long.values)


def test_oracle_rejects_thin_or_ragged_context():
    rng = np.random.default_rng(10)
    spec = extractor_spec([conv_of(rng, 1, 2, 5, 2), PoolLayer(PoolKind.MAX, 2)],
                          window=32, step=8)
    win = rng.standard_normal((1, 32)).astype(np.float32)
    la = min_context_len(spec)
    with pytest.raises(ConfigError):
        extended_window_oracle(spec, np.zeros((1, la - 2), np.float32), win)
    with pytest.raises(ConfigError):
        extended_window_oracle(spec, np.zeros((1, la + 1), np.float32), win)


# --- contamination and context length -------------------------------------

def test_contamination_counts_pooling_free():
    rng = np.random.default_rng(11)
    layers = [conv_of(rng, 1, 2, 3, 2), ReluLayer(), conv_of(rng, 2, 2, 5, 1)]
    spec = extractor_spec(layers, window=64, step=16)
    rows = contamination_profile(spec, input_len=64)
    assert [r.affected for r in rows] == [4, 4, 8]  # (3-1)*2, +(5-1)*1


def test_contamination_caps_at_layer_length():
    rng = np.random.default_rng(12)
    layers = [conv_of(rng, 1, 2, 5, 2) for _ in range(12)]
    for i in range(1, 12):
        layers[i] = conv_of(rng, 2, 2, 5, 2)
    spec = extractor_spec(layers, window=64, step=16)
    rows = contamination_profile(spec, input_len=64)
    assert rows[-1].affected == 64  # 12*8 = 96 clamps to the window


def test_min_context_reference_values():
    assert min_context_len(build_h_acc()) == 12
    assert min_context_len(build_h_ppg()) == 640
    spec = build_h_ppg()
    assert min_context_len(spec) % cumulative_pool_factor(spec) == 0
    assert min_context_len(spec) >= receptive_field(spec) - 1


# --- MACs -----------------------------------------------------------------

def test_mac_hand_counts():
    rng = np.random.default_rng(13)
    conv = conv_of(rng, 1, 4, 3)
    spec = extractor_spec([conv], window=100, step=25)
    assert mac_count(spec, 100) == 1200

    dense = DenseLayer(np.zeros((2, 10), np.float32), np.zeros(2, np.float32))
    clf = ModelSpec("t", 1, 32.0, 10, 5, 1,
                    (ConvLayer(np.ones((1, 1, 1), np.float32),
                               np.zeros(1, np.float32), 1),
                     FlattenLayer(), dense))
    assert mac_count(clf, 10) - mac_count(clf, 10, conv_only=True) == 20


def test_mac_ratio_is_window_over_step():
    rng = np.random.default_rng(14)
    layers = [conv_of(rng, 2, 8, 5, 2), ReluLayer(), conv_of(rng, 8, 8, 3)]
    spec = extractor_spec(layers, in_ch=2, window=256, step=32)
    full = mac_count(spec, 256)
    chunk = mac_count(spec, 32, conv_only=True)
    assert full % chunk == 0
    assert full // chunk == 256 // 32


def test_mac_checks_pool_divisibility():
    rng = np.random.default_rng(15)
    spec = extractor_spec([conv_of(rng, 1, 2, 3), PoolLayer(PoolKind.MAX, 4)],
                          window=64, step=16)
    with pytest.raises(AlignmentError):
        mac_count(spec, 30)


# --- persistence ----------------------------------------------------------

@pytest.mark.parametrize("builder", [build_h_acc, build_h_eeg, build_h_ppg])
def test_save_load_round_trip_bit_exact(builder, tmp_path):
    spec = builder()
    path = save_model(spec, tmp_path / f"{spec.name}.json")
    back = load_model(path)
    assert back.name == spec.name
    assert back.classifier_start == spec.classifier_start
    assert weights_blob(back) == weights_blob(spec)
    emb_a, out_a = full_inference(
        spec, np.zeros((spec.input_channels, spec.window_len), np.float32))
    emb_b, out_b = full_inference(
        back, np.zeros((back.input_channels, back.window_len), np.float32))
    assert_array_equal(emb_a.values, emb_b.values)
    assert_array_equal(out_a, out_b)


def test_load_rejects_short_blob(tmp_path):
    spec = build_h_acc()
    path = save_model(spec, tmp_path / "m.json")
    manifest = json.loads(path.read_text())
    blob_path = tmp_path / manifest["weights_file"]
    blob_path.write_bytes(blob_path.read_bytes()[:-8])
    with pytest.raises(ManifestError):
        load_model(path)


def test_load_rejects_bad_digest(tmp_path):
    spec = build_h_acc()
    path = save_model(spec, tmp_path / "m.json")
    manifest = json.loads(path.read_text())
    manifest["weights_sha256"] = "0" * 64
    path.write_text(json.dumps(manifest))
    with pytest.raises(ManifestError):
        load_model(path)


def test_load_tolerates_provenance_keys(tmp_path):
    spec = build_h_acc()
    path = save_model(spec, tmp_path / "m.json")
    manifest = json.loads(path.read_text())
    manifest["exported_by"] = "somebody else's tool 1.2.3"
    path.write_text(json.dumps(manifest))
    back = load_model(path)
    assert weights_blob(back) == weights_blob(spec)


def test_load_rejects_unknown_layer_type(tmp_path):
    spec = build_h_acc()
    path = save_model(spec, tmp_path / "m.json")
    manifest = json.loads(path.read_text())
    manifest["layers"][0]["type"] = "transmogrifier"
    path.write_text(json.dumps(manifest))
    with pytest.raises(ManifestError):
        load_model(path)


def test_load_missing_required_key(tmp_path):
    spec = build_h_acc()
    path = save_model(spec, tmp_path / "m.json")
    manifest = json.loads(path.read_text())
    del manifest["window_len"]
    path.write_text(json.dumps(manifest))
    with pytest.raises(ManifestError):
        load_model(path)


# --- classifier execution -------------------------------------------------

def test_classifier_flattens_row_major():
    rng = np.random.default_rng(16)
    emb_vals = rng.standard_normal((3, 4)).astype(np.float32)
    w = rng.standard_normal((2, 12)).astype(np.float32)
    b = rng.standard_normal(2).astype(np.float32)
    spec = ModelSpec(
        "t", 1, 32.0, 4, 2, 1,
        (ConvLayer(np.ones((3, 1, 1), np.float32), np.zeros(3, np.float32), 1),
         FlattenLayer(), DenseLayer(w, b)))
    got = run_classifier(spec, emb_vals)
    want = w.astype(np.float64) @ emb_vals.ravel(order="C").astype(np.float64) + b
    assert_allclose(got, want, rtol=1e-6)


def test_reference_models_infer_end_to_end():
    for builder, units in ((build_h_ppg, 1), (build_h_eeg, 2), (build_h_acc, 2)):
        spec = builder()
        rng = np.random.default_rng(17)
        x = rng.standard_normal(
            (spec.input_channels, spec.window_len)).astype(np.float32)
        emb, out = full_inference(spec, x)
        assert emb.temporal_len == spec.window_len // cumulative_pool_factor(spec)
        assert out.shape == (units,)
        assert np.all(np.isfinite(out))
