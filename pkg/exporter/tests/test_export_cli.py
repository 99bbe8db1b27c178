import json

import torch

from streamtcn import load_model
from streamtcn_export import build_source_model
from streamtcn_export.cli import main

CONFIG = {
    "name": "cli_toy", "input_channels": 2, "sample_rate_hz": 64.0,
    "window_len": 32, "step": 8,
    "layers": [
        {"type": "conv", "out_channels": 4, "kernel_size": 3},
        {"type": "relu"},
        {"type": "batchnorm"},
        {"type": "avgpool", "pool_len": 2},
        {"type": "flatten"},
        {"type": "dense", "out_units": 2},
    ],
}


def write_inputs(tmp_path, config=CONFIG, seed=9):
    (tmp_path / "arch.json").write_text(json.dumps(config))
    torch.manual_seed(seed)
    torch.save(build_source_model(CONFIG).state_dict(), tmp_path / "ckpt.pt")
    return [str(tmp_path / "ckpt.pt"), str(tmp_path / "arch.json")]


def run(tmp_path, *extra, config=CONFIG):
    ckpt, cfg = write_inputs(tmp_path, config)
    return main(["export", "--checkpoint", ckpt, "--config", cfg,
                 "--out", str(tmp_path / "out"), *extra])


def test_export_roundtrips_through_engine(tmp_path, capsys):
    assert run(tmp_path, "--verify", "8") == 0
    out = capsys.readouterr().out
    assert "parity ok" in out
    spec = load_model(tmp_path / "out" / "cli_toy.json")
    assert spec.output_units == 2
    payload = json.loads((tmp_path / "out" / "cli_toy.json").read_text())
    assert set(payload["provenance"]) == {
        "framework", "checkpoint_sha256", "exported_at"}


def test_zero_tolerance_turns_fp_noise_into_parity_failure(tmp_path, capsys):
    assert run(tmp_path, "--verify", "4", "--tol", "0") == 1
    assert "parity FAIL" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path):
    bad = {**CONFIG, "layers": [{"type": "gru"}]}
    assert run(tmp_path, config=bad) == 2


def test_mismatched_checkpoint_exits_2(tmp_path):
    ckpt, _ = write_inputs(tmp_path)
    other = {**CONFIG, "layers": [{"type": "conv", "out_channels": 7,
                                   "kernel_size": 5}]}
    (tmp_path / "other.json").write_text(json.dumps(other))
    rc = main(["export", "--checkpoint", ckpt, "--config",
               str(tmp_path / "other.json"), "--out", str(tmp_path / "out")])
    assert rc == 2


def test_missing_files_exit_3(tmp_path):
    (tmp_path / "arch.json").write_text(json.dumps(CONFIG))
    rc = main(["export", "--checkpoint", str(tmp_path / "nope.pt"),
               "--config", str(tmp_path / "arch.json"),
               "--out", str(tmp_path / "out")])
    assert rc == 3
    ckpt, _ = write_inputs(tmp_path)
    rc = main(["export", "--checkpoint", ckpt, "--config",
               str(tmp_path / "nope.json"), "--out", str(tmp_path / "out")])
    assert rc == 3
