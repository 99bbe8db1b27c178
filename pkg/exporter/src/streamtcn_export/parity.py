"""Source-vs-engine agreement checks on random windows.

Both sides see identical float32 windows; the report carries the worst
absolute deviation.  When it exceeds tolerance, the feature stack is
replayed prefix by prefix to name the first diverging layer — the usual
culprit hunt after an export goes wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from streamtcn import ModelSpec, full_inference

from .convert import MappedLayer


@dataclass(frozen=True)
class ParityReport:
    max_abs_dev: float
    tol: float
    n_windows: int
    compared: str  # "classifier" or "embedding"
    first_bad_layer: int | None = None  # engine layer index, failures only
    first_bad_child: int | None = None  # matching torch child index

    @property
    def passed(self) -> bool:
        return self.max_abs_dev <= self.tol

    def describe(self) -> str:
        state = "ok" if self.passed else "FAIL"
        msg = (f"parity {state}: max |dev| {self.max_abs_dev:.3g} over "
               f"{self.n_windows} windows ({self.compared}, tol {self.tol:g})")
        if self.first_bad_layer is not None:
            msg += (f"; first divergence at engine layer "
                    f"{self.first_bad_layer} (torch child "
                    f"{self.first_bad_child})")
        return msg


def _source_output(module: torch.nn.Module, x: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return module(torch.from_numpy(x[None]))[0].numpy()


def _engine_output(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    emb, out = full_inference(spec, x)
    return out if out is not None else emb.values


def _prefix_spec(spec: ModelSpec, k: int) -> ModelSpec:
    return ModelSpec(
        name=f"{spec.name}.prefix{k}", input_channels=spec.input_channels,
        sample_rate_hz=spec.sample_rate_hz, window_len=spec.window_len,
        step=spec.step, classifier_start=k, layers=spec.layers[:k],
    )


def first_divergence(module: torch.nn.Module, spec: ModelSpec,
                     mapped: list[MappedLayer], x: np.ndarray,
                     tol: float) -> tuple[int, int] | None:
    """Locate the first feature layer whose outputs disagree beyond tol.

    Returns (engine layer index, torch child index), or None when the
    feature stacks agree — then the classifier head is the suspect.
    """
    acts = []
    with torch.no_grad():
        t = torch.from_numpy(x[None])
        for child in module.children():
            t = child(t)
            acts.append(t)
    for k in range(1, spec.classifier_start + 1):
        emb, _ = full_inference(_prefix_spec(spec, k), x)
        child_idx = mapped[k - 1].child_index
        ref = acts[child_idx][0].numpy()
        if np.max(np.abs(emb.values - ref)) > tol:
            return k - 1, child_idx
    return None


def verify_parity(module: torch.nn.Module, spec: ModelSpec, n_windows: int,
                  rng: np.random.Generator, tol: float = 1e-4,
                  mapped: list[MappedLayer] | None = None) -> ParityReport:
    """Compare source and engine on seeded random windows.

    Classifier outputs are compared when the model has a head, otherwise
    the embeddings.  On failure (and when ``mapped`` is supplied) the
    report names the first diverging layer.
    """
    module.eval()
    compared = "classifier" if spec.output_units is not None else "embedding"
    worst, worst_x = 0.0, None
    for _ in range(n_windows):
        x = rng.standard_normal(
            (spec.input_channels, spec.window_len)).astype(np.float32)
        dev = float(np.max(np.abs(
            _source_output(module, x) - _engine_output(spec, x))))
        if dev >= worst:
            worst, worst_x = dev, x
    bad_layer = bad_child = None
    if worst > tol and mapped is not None and worst_x is not None:
        hit = first_divergence(module, spec, mapped, worst_x, tol)
        if hit is not None:
            bad_layer, bad_child = hit
        elif spec.classifier_start < len(mapped):
            # feature stacks agree: blame the classifier head
            bad_layer = spec.classifier_start
            bad_child = mapped[spec.classifier_start].child_index
    return ParityReport(worst, tol, n_windows, compared, bad_layer, bad_child)
