"""Checkpoint-to-manifest orchestration.

The manifest and weight blob are written by the engine itself, so the
format can never drift from what the engine loads; this module only adds
a provenance block (source framework, checkpoint hash, export time) on
top, which loaders ignore.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from streamtcn import load_model, save_model

from .convert import convert_module, map_children
from .errors import ParityError
from .parity import ParityReport, verify_parity
from .source import build_source_model, load_checkpoint, load_config


@dataclass(frozen=True)
class ExportReport:
    manifest_path: Path
    weights_path: Path
    provenance: dict
    parity: ParityReport | None


def _provenance(checkpoint: Path) -> dict:
    return {
        "framework": f"pytorch {torch.__version__}",
        "checkpoint_sha256": hashlib.sha256(
            checkpoint.read_bytes()).hexdigest(),
        "exported_at": datetime.now(timezone.utc).isoformat(
            timespec="seconds"),
    }


def export_checkpoint(checkpoint: str | Path, config: str | Path,
                      out_dir: str | Path, *, verify: int = 0, seed: int = 0,
                      tol: float = 1e-4) -> ExportReport:
    """Export a state_dict checkpoint described by ``config``.

    With ``verify > 0``, that many random windows are pushed through the
    source network and the engine (loading the freshly written manifest,
    so the emitted artifact itself is what's checked); a deviation beyond
    ``tol`` raises :class:`ParityError` carrying the report.
    """
    checkpoint = Path(checkpoint)
    cfg = load_config(config)
    model = load_checkpoint(build_source_model(cfg), checkpoint)

    spec = convert_module(
        model, name=cfg["name"], input_channels=int(cfg["input_channels"]),
        sample_rate_hz=float(cfg["sample_rate_hz"]),
        window_len=int(cfg["window_len"]), step=int(cfg["step"]),
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = save_model(spec, out_dir / f"{spec.name}.json")

    payload = json.loads(manifest_path.read_text())
    payload["provenance"] = _provenance(checkpoint)
    manifest_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    weights_path = manifest_path.parent / payload["weights_file"]

    parity = None
    if verify > 0:
        exported = load_model(manifest_path)  # round-trips sha + layout
        parity = verify_parity(model, exported, verify,
                               np.random.default_rng(seed), tol,
                               mapped=map_children(model))
        if not parity.passed:
            raise ParityError(parity.describe(), report=parity)
    return ExportReport(manifest_path, weights_path,
                        payload["provenance"], parity)
