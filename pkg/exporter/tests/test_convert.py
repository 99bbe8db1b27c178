import json

import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose, assert_array_equal
from torch import nn

from streamtcn import (
    BatchNormParams,
    ConvLayer,
    DenseLayer,
    FlattenLayer,
    PoolKind,
    PoolLayer,
    ReluLayer,
)
from streamtcn_export import (
    CausalConv1d,
    ExportError,
    build_source_model,
    convert_module,
    export_checkpoint,
    map_children,
)

META = dict(name="t", input_channels=1, sample_rate_hz=32.0,
            window_len=16, step=4)


def convert(module, **overrides):
    return convert_module(module, **{**META, **overrides})


# --- mapping --------------------------------------------------------------

def test_causal_conv_weights_copied_verbatim():
    torch.manual_seed(0)
    m = nn.Sequential(CausalConv1d(2, 3, 5, dilation=2))
    spec = convert(m, input_channels=2)
    layer = spec.layers[0]
    assert isinstance(layer, ConvLayer)
    assert layer.kernel_size == 5 and layer.dilation == 2
    assert_array_equal(layer.weights, m[0].conv.weight.detach().numpy())
    assert_array_equal(layer.bias, m[0].conv.bias.detach().numpy())


def test_biasless_conv_gets_zero_bias():
    m = nn.Sequential(CausalConv1d(1, 2, 3, bias=False))
    layer = convert(m).layers[0]
    assert_array_equal(layer.bias, np.zeros(2, np.float32))


def test_identity_batchnorm_folds_to_identity():
    m = nn.Sequential(CausalConv1d(1, 4, 3), nn.BatchNorm1d(4, eps=0.0))
    m.eval()
    bn = convert(m).layers[1]
    assert isinstance(bn, BatchNormParams)
    assert_array_equal(bn.scale, np.ones(4, np.float32))
    assert_array_equal(bn.shift, np.zeros(4, np.float32))


def test_trained_batchnorm_statistics_fold_in():
    m = nn.Sequential(CausalConv1d(1, 2, 3), nn.BatchNorm1d(2, eps=1e-5))
    with torch.no_grad():
        m[1].running_mean.copy_(torch.tensor([0.5, -1.0]))
        m[1].running_var.copy_(torch.tensor([4.0, 0.25]))
        m[1].weight.copy_(torch.tensor([2.0, 1.0]))
        m[1].bias.copy_(torch.tensor([0.0, 3.0]))
    m.eval()
    bn = convert(m).layers[1]
    assert_allclose(bn.scale, [2.0 / np.sqrt(4.0 + 1e-5),
                               1.0 / np.sqrt(0.25 + 1e-5)], rtol=1e-6)
    assert_allclose(bn.shift, [-0.5 * bn.scale[0], 3.0 + bn.scale[1]],
                    rtol=1e-6)


def test_pool_flatten_dense_mapping():
    torch.manual_seed(1)
    m = nn.Sequential(CausalConv1d(1, 4, 3), nn.ReLU(), nn.MaxPool1d(2),
                      nn.AvgPool1d(2), nn.Flatten(), nn.Linear(16, 3))
    spec = convert(m)
    kinds = [type(l) for l in spec.layers]
    assert kinds == [ConvLayer, ReluLayer, PoolLayer, PoolLayer,
                     FlattenLayer, DenseLayer]
    assert spec.layers[2].kind is PoolKind.MAX
    assert spec.layers[3].kind is PoolKind.AVERAGE
    assert spec.classifier_start == 4
    assert_array_equal(spec.layers[5].weights, m[5].weight.detach().numpy())


def test_inference_noops_are_dropped():
    m = nn.Sequential(nn.Dropout(0.5), CausalConv1d(1, 2, 3), nn.Identity(),
                      nn.ReLU())
    spec = convert(m)
    assert len(spec.layers) == 2
    # provenance still points at the right torch children
    assert [r.child_index for r in map_children(m)] == [1, 3]


def test_headless_network_is_a_bare_extractor():
    spec = convert(nn.Sequential(CausalConv1d(1, 2, 3), nn.ReLU()))
    assert spec.classifier_start == len(spec.layers)
    assert spec.output_units is None


# --- rejections -----------------------------------------------------------

def test_plain_conv1d_is_rejected():
    for conv in (nn.Conv1d(1, 2, 3, padding=1), nn.Conv1d(1, 2, 3)):
        with pytest.raises(ExportError, match="CausalConv1d"):
            convert(nn.Sequential(conv))


def test_overlapping_or_padded_pooling_is_rejected():
    with pytest.raises(ExportError, match="stride"):
        convert(nn.Sequential(CausalConv1d(1, 2, 3), nn.MaxPool1d(4, stride=2)))
    with pytest.raises(ExportError, match="padded"):
        convert(nn.Sequential(CausalConv1d(1, 2, 3),
                              nn.AvgPool1d(2, stride=2, padding=1)))


def test_non_sequential_graph_is_rejected():
    class Branchy(nn.Module):
        def __init__(self):
            super().__init__()
            self.a = CausalConv1d(1, 2, 3)

        def forward(self, x):
            return self.a(x) + x

    with pytest.raises(ExportError, match="Sequential"):
        convert(Branchy())


def test_unsupported_layer_kind_is_rejected():
    with pytest.raises(ExportError, match="Sigmoid"):
        convert(nn.Sequential(CausalConv1d(1, 2, 3), nn.Sigmoid()))


def test_training_mode_batchnorm_is_rejected():
    m = nn.Sequential(CausalConv1d(1, 2, 3), nn.BatchNorm1d(2))
    m.train()
    with pytest.raises(ExportError, match="eval"):
        convert(m)


def test_off_center_flatten_is_rejected():
    m = nn.Sequential(CausalConv1d(1, 2, 3), nn.Flatten(start_dim=2))
    with pytest.raises(ExportError, match="Flatten"):
        convert(m)


# --- config-driven builds -------------------------------------------------

def test_build_source_model_shapes():
    config = {
        **META, "layers": [
            {"type": "conv", "out_channels": 4, "kernel_size": 3},
            {"type": "relu"},
            {"type": "maxpool", "pool_len": 2},
            {"type": "flatten"},
            {"type": "dense", "out_units": 2},
        ],
    }
    m = build_source_model(config)
    assert isinstance(m[0], CausalConv1d)
    assert m[4].in_features == 4 * (16 // 2)


def test_build_rejects_misaligned_pool_and_early_dense():
    bad_pool = {**META, "layers": [{"type": "maxpool", "pool_len": 5}]}
    with pytest.raises(ExportError, match="divide"):
        build_source_model(bad_pool)
    bad_dense = {**META, "layers": [{"type": "dense", "out_units": 2}]}
    with pytest.raises(ExportError, match="flatten"):
        build_source_model(bad_dense)


# --- end-to-end artifact --------------------------------------------------

def acc_shaped_config():
    layers = []
    for _ in range(6):
        layers.append({"type": "conv", "out_channels": 32, "kernel_size": 3})
        layers.append({"type": "relu"})
    layers.append({"type": "batchnorm"})
    layers.append({"type": "flatten"})
    layers.append({"type": "dense", "out_units": 2})
    return {"name": "acc_shaped", "input_channels": 3,
            "sample_rate_hz": 32.0, "window_len": 960, "step": 160,
            "layers": layers}


def test_toy_export_writes_one_conv_manifest(tmp_path):
    config = {**META, "layers": [{"type": "conv", "out_channels": 2,
                                  "kernel_size": 3}]}
    (tmp_path / "arch.json").write_text(json.dumps(config))
    torch.manual_seed(2)
    model = build_source_model(config)
    torch.save(model.state_dict(), tmp_path / "ckpt.pt")
    report = export_checkpoint(tmp_path / "ckpt.pt", tmp_path / "arch.json",
                               tmp_path / "out")
    payload = json.loads(report.manifest_path.read_text())
    assert [l["type"] for l in payload["layers"]] == ["conv"]
    assert payload["provenance"]["framework"].startswith("pytorch")
    assert len(payload["provenance"]["checkpoint_sha256"]) == 64


def test_blob_bytes_equal_parameter_count_times_four(tmp_path):
    config = acc_shaped_config()
    (tmp_path / "arch.json").write_text(json.dumps(config))
    torch.manual_seed(3)
    model = build_source_model(config)
    torch.save(model.state_dict(), tmp_path / "ckpt.pt")
    report = export_checkpoint(tmp_path / "ckpt.pt", tmp_path / "arch.json",
                               tmp_path / "out")
    # folded batch-norm emits scale+shift, the same count as gamma+beta,
    # so the blob is exactly the trainable parameters at four bytes each
    n_params = sum(p.numel() for p in model.parameters())
    assert report.weights_path.stat().st_size == 4 * n_params
