"""Source-side model vocabulary: the PyTorch modules the exporter accepts.

Training code that wants its checkpoints exportable builds the network as
an ``nn.Sequential`` of the modules mapped here.  Convolutions must go
through :class:`CausalConv1d` — a plain ``nn.Conv1d`` pads symmetrically
(or not at all), and neither variant has a streaming equivalent.

``build_source_model`` rebuilds such a network from a small JSON
architecture description, so a bare ``state_dict`` checkpoint plus the
description is enough to export.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ExportError

_META_KEYS = ("name", "input_channels", "sample_rate_hz", "window_len", "step")


class CausalConv1d(nn.Module):
    """1-D convolution padded on the left only, so output length equals
    input length and ``y[t]`` depends on ``x[:t+1]`` alone."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 dilation: int = 1, bias: bool = True):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, out_channels, kernel_size,
                              dilation=dilation, padding=0, bias=bias)
        self.pad_len = (kernel_size - 1) * dilation

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.pad(x, (self.pad_len, 0)))


def load_config(path: str | Path) -> dict:
    """Read and sanity-check an architecture description."""
    config = json.loads(Path(path).read_text())
    missing = [k for k in _META_KEYS if k not in config]
    if missing:
        raise ExportError(f"config is missing keys: {', '.join(missing)}")
    if not isinstance(config.get("layers"), list) or not config["layers"]:
        raise ExportError("config needs a non-empty 'layers' list")
    return config


def build_source_model(config: dict) -> nn.Sequential:
    """Instantiate the architecture a checkpoint's state_dict belongs to.

    Layer entries: ``{"type": "conv", "out_channels": n, "kernel_size": m,
    "dilation": d}``, ``{"type": "relu"}``, ``{"type": "batchnorm"}``,
    ``{"type": "maxpool"|"avgpool", "pool_len": k}``, ``{"type":
    "flatten"}``, ``{"type": "dense", "out_units": u}``.  Channel counts
    and the dense fan-in follow from the entries before them.
    """
    modules: list[nn.Module] = []
    channels = int(config["input_channels"])
    cols = int(config["window_len"])
    flattened = None
    for i, entry in enumerate(config["layers"]):
        kind = entry.get("type")
        if kind == "conv":
            modules.append(CausalConv1d(
                channels, int(entry["out_channels"]),
                int(entry["kernel_size"]),
                dilation=int(entry.get("dilation", 1)),
                bias=bool(entry.get("bias", True)),
            ))
            channels = int(entry["out_channels"])
        elif kind == "relu":
            modules.append(nn.ReLU())
        elif kind == "batchnorm":
            modules.append(nn.BatchNorm1d(channels))
        elif kind in ("maxpool", "avgpool"):
            k = int(entry["pool_len"])
            if cols % k != 0:
                raise ExportError(
                    f"layer {i}: pool_len {k} does not divide the "
                    f"{cols} columns entering it"
                )
            cols //= k
            modules.append(nn.MaxPool1d(k) if kind == "maxpool"
                           else nn.AvgPool1d(k))
        elif kind == "flatten":
            modules.append(nn.Flatten())
            flattened = channels * cols
        elif kind == "dense":
            if flattened is None:
                raise ExportError(f"layer {i}: dense before flatten")
            modules.append(nn.Linear(flattened, int(entry["out_units"])))
            flattened = int(entry["out_units"])
        else:
            raise ExportError(f"layer {i}: unknown layer type {kind!r}")
    return nn.Sequential(*modules)


def load_checkpoint(model: nn.Sequential, path: str | Path) -> nn.Sequential:
    """Load a ``state_dict`` checkpoint into the rebuilt architecture."""
    state = torch.load(path, map_location="cpu", weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise ExportError(f"checkpoint does not fit the config: {exc}") from exc
    model.eval()
    return model
