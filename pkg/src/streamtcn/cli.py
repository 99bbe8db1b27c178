"""Command-line front end.

Subcommands cover the analysis and benchmark workflows end to end:
``pool-bounds``, ``probe``, ``stream-compare``, ``speedup``, ``gen-model``,
``gen-signal`` and ``infer``.  Exit codes: 0 success, 2 validation error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    shiftability_report,
    sweep_fs,
    sweep_pool_len,
    zero_padding_probe,
)
from .bench import bench_speedup, random_model, random_signal
from .errors import EngineError
from .layers import PoolKind
from .model import ModelSpec, full_inference, load_model, save_model
from .reference import REFERENCE_BUILDERS
from .signals import (
    Signal,
    SignalKind,
    SyntheticSpec,
    WindowConfig,
    gen_signal,
    load_signal_csv,
    nrmse,
    save_signal_csv,
    save_signal_raw,
    window_iter,
)
from .streaming import Mode, StreamSession

FS_SWEEP = [32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]
POOL_LEN_SWEEP = [2 ** k for k in range(1, 17)]
POOL_WINDOW_SECONDS = 8.0

_KIND_MAP = {"max": PoolKind.MAX, "avg": PoolKind.AVERAGE, "first": PoolKind.FIRST}


def _write_rows(path: Path, header: list[str], rows: list[list], fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        payload = [dict(zip(header, row)) for row in rows]
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        path = path.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def _sweep_rows(result) -> list[list]:
    return [[row.param, row.mean_rel, row.max_rel, row.bound_rel]
            for row in result.rows]


def cmd_pool_bounds(args: argparse.Namespace, out_dir: Path) -> int:
    kind = _KIND_MAP[args.kind]
    mono = SyntheticSpec(SignalKind.MONO, base_freq_hz=args.f0)
    multi = SyntheticSpec(SignalKind.MULTI, base_freq_hz=args.f0,
                          harmonics=args.harmonics)
    jobs = [
        ("fs_sweep_mono", sweep_fs(mono, FS_SWEEP, POOL_WINDOW_SECONDS, kind)),
        ("fs_sweep_multi", sweep_fs(multi, FS_SWEEP, POOL_WINDOW_SECONDS, kind)),
        ("pool_len_sweep_mono", sweep_pool_len(mono, POOL_LEN_SWEEP, 256.0, kind)),
        ("pool_len_sweep_multi", sweep_pool_len(multi, POOL_LEN_SWEEP, 256.0, kind)),
    ]
    for stem, result in jobs:
        path = _write_rows(out_dir / stem, ["param", "mean_rel", "max_rel", "bound"],
                           _sweep_rows(result), args.format)
        worst = max((r.max_rel for r in result.rows), default=0.0)
        print(f"{stem}: {len(result.rows)} rows, worst max_rel {worst:.4g} -> {path}")
    return 0


def cmd_probe(args: argparse.Namespace, out_dir: Path) -> int:
    spec = load_model(args.manifest)
    report = zero_padding_probe(spec)
    cfg = WindowConfig(spec.window_len, spec.step)
    shift = shiftability_report(spec, cfg, f_max_hz=args.f_max)
    probe_rows = [[r.layer_index, r.total, r.affected, r.fraction]
                  for r in report.rows]
    probe_path = _write_rows(out_dir / f"{spec.name}_probe",
                             ["layer", "total", "affected", "fraction"],
                             probe_rows, args.format)
    shift_path = out_dir / f"{spec.name}_shiftability.json"
    shift.to_json(shift_path)
    for row in report.rows:
        print(f"layer {row.layer_index:3d} {row.layer_kind:9s} "
              f"{row.affected:6d}/{row.total:<6d} ({100 * row.fraction:6.2f}%)")
    print(f"final conv fraction: {report.final_conv_fraction:.4%}")
    print(f"recommendation: {shift.recommendation.value}"
          + (" [blocked: misaligned step]" if shift.alignment_blocking else ""))
    print(f"wrote {probe_path} and {shift_path}")
    return 0


def _load_or_make_signal(args: argparse.Namespace, spec: ModelSpec,
                         rng: np.random.Generator, n_windows: int) -> Signal:
    if args.signal:
        return load_signal_csv(args.signal, spec.sample_rate_hz)
    length = spec.window_len + (n_windows - 1) * spec.step
    return random_signal(rng, spec.input_channels, length, spec.sample_rate_hz)


def cmd_stream_compare(args: argparse.Namespace, out_dir: Path) -> int:
    spec = load_model(args.manifest)
    rng = np.random.default_rng(args.seed)
    step = args.step if args.step else spec.step
    cfg = WindowConfig(spec.window_len, step)
    signal = _load_or_make_signal(args, spec, rng, args.windows)
    windows = list(window_iter(signal, cfg))

    refs = [full_inference(spec, w) for w in windows]
    ref_emb = np.concatenate([e.values.ravel() for e, _ in refs])
    n_ring = cfg.windows_per_ring
    header = ["mode", "embedding_nrmse"]
    units = spec.output_units or 0
    header += [f"output_nrmse_{u}" for u in range(units)]

    rows = []
    for label in args.modes.split(","):
        mode = Mode.EXACT if label.strip() == "exact" else Mode.APPROXIMATE
        session = StreamSession(spec, cfg, mode,
                                force_misaligned=args.force_misaligned)
        embs, outs = [], []
        for k, chunk in enumerate(_chunks(signal, step)):
            result = session.push_samples(chunk)
            if not result.warmup:
                embs.append(result.embedding.values.ravel())
                outs.append(result.classifier_output)
        n_cmp = min(len(embs), len(windows))
        emb_nrmse = nrmse(
            np.concatenate([refs[k][0].values.ravel() for k in range(n_cmp)]),
            np.concatenate(embs[:n_cmp]),
        )
        row = [label.strip(), emb_nrmse]
        for u in range(units):
            ref_series = np.array([refs[k][1][u] for k in range(n_cmp)])
            got_series = np.array([outs[k][u] for k in range(n_cmp)])
            row.append(nrmse(ref_series, got_series))
        rows.append(row)
        print(f"mode {label.strip():7s} embedding nrmse {emb_nrmse:.4%}")

    path = _write_rows(out_dir / f"{spec.name}_stream_compare", header, rows,
                       args.format)
    print(f"wrote {path}")
    return 0


def _chunks(signal: Signal, step: int):
    for start in range(0, signal.length - step + 1, step):
        yield signal.samples[:, start:start + step]


def cmd_speedup(args: argparse.Namespace, out_dir: Path) -> int:
    rng = np.random.default_rng(args.seed)
    if args.manifest:
        spec = load_model(args.manifest)
    else:
        cfg = WindowConfig(256, 64)
        spec = random_model(rng, cfg, input_channels=2, depth=6, width=32,
                            kernels=(5,), dilations=(2,), name="bench")
    steps = [int(s) for s in args.steps.split(",")]
    result = bench_speedup(spec, steps, args.repetitions, rng)
    rows = [[r.step, r.window, r.mode, r.ns_per_window, r.ns_per_step, r.mac_count]
            for r in result.rows]
    path = _write_rows(out_dir / f"{spec.name}_speedup",
                       ["step", "window", "mode", "ns_per_window", "ns_per_step",
                        "mac_count"], rows, args.format)
    fit_payload = {
        label: {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}
        for label, f in result.fits.items()
    }
    fit_path = out_dir / f"{spec.name}_speedup_fit.json"
    fit_path.write_text(json.dumps(fit_payload, indent=2) + "\n")
    for label, f in result.fits.items():
        print(f"{label:7s} slope {f.slope:10.1f} ns/sample  intercept "
              f"{f.intercept:12.1f} ns  r^2 {f.r_squared:.4f}")
    for msg in result.timer_warnings():
        print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {path} and {fit_path}")
    return 0


def cmd_gen_model(args: argparse.Namespace, out_dir: Path) -> int:
    rng = np.random.default_rng(args.seed)
    if args.arch in REFERENCE_BUILDERS:
        spec = REFERENCE_BUILDERS[args.arch](seed=args.seed or 7)
    else:
        cfg = WindowConfig(args.window, args.step)
        pools = tuple(int(p) for p in args.pools.split(",")) if args.pools else ()
        spec = random_model(rng, cfg, pool_lens=pools, name=args.name)
    manifest = save_model(spec, out_dir / f"{spec.name}.json")
    print(f"wrote {manifest}")
    return 0


def cmd_gen_signal(args: argparse.Namespace, out_dir: Path) -> int:
    spec = SyntheticSpec(
        SignalKind.MULTI if args.kind == "multi" else SignalKind.MONO,
        base_freq_hz=args.f0, harmonics=args.harmonics,
        duration_s=args.duration,
    )
    signal = gen_signal(spec, args.fs)
    if args.raw:
        path = out_dir / f"{args.name}.f32"
        save_signal_raw(signal, path)
    else:
        path = out_dir / f"{args.name}.csv"
        save_signal_csv(signal, path)
    print(f"wrote {path} ({signal.channels} ch x {signal.length} samples)")
    return 0


def cmd_infer(args: argparse.Namespace, out_dir: Path) -> int:
    spec = load_model(args.manifest)
    cfg = WindowConfig(spec.window_len, args.step if args.step else spec.step)
    results = []
    for sig_path in args.signals:
        signal = load_signal_csv(sig_path, spec.sample_rate_hz)
        windows = []
        for window in window_iter(signal, cfg):
            emb, out = full_inference(spec, window)
            windows.append({
                "embedding": [[float(v) for v in row] for row in emb.values],
                "output": None if out is None else [float(v) for v in out],
            })
        results.append({"file": str(sig_path), "windows": windows})
    payload = {"manifest": spec.name, "results": results}
    path = Path(args.out) if args.out else out_dir / "infer.json"
    path.write_text(json.dumps(payload) + "\n")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamtcn",
        description="Streaming 1D temporal-CNN inference engine and analysis tools",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool-bounds", help="sweep pooling shift-error bounds")
    p.add_argument("--kind", choices=sorted(_KIND_MAP), default="max")
    p.add_argument("--f0", type=float, default=1.0)
    p.add_argument("--harmonics", type=int, default=5)
    p.set_defaults(func=cmd_pool_bounds)

    p = sub.add_parser("probe", help="zero-padding contamination probe")
    p.add_argument("--manifest", required=True)
    p.add_argument("--f-max", type=float, default=None)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("stream-compare", help="streaming vs full inference")
    p.add_argument("--manifest", required=True)
    p.add_argument("--signal", default=None, help="CSV signal (random if absent)")
    p.add_argument("--windows", type=int, default=12,
                   help="windows to synthesise when --signal is absent")
    p.add_argument("--modes", default="exact,approx")
    p.add_argument("--step", type=int, default=None, help="override manifest step")
    p.add_argument("--force-misaligned", action="store_true")
    p.set_defaults(func=cmd_stream_compare)

    p = sub.add_parser("speedup", help="wall-clock streaming benchmark")
    p.add_argument("--manifest", default=None)
    p.add_argument("--steps", default="16,32,64,128")
    p.add_argument("--repetitions", type=int, default=15)
    p.set_defaults(func=cmd_speedup)

    p = sub.add_parser("gen-model", help="write a model manifest + weights")
    p.add_argument("--arch", choices=(*sorted(REFERENCE_BUILDERS), "random"),
                   default="random")
    p.add_argument("--name", default="random")
    p.add_argument("--window", type=int, default=256)
    p.add_argument("--step", type=int, default=64)
    p.add_argument("--pools", default="", help="comma list, e.g. 2,2")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("gen-signal", help="write a synthetic cosine signal")
    p.add_argument("--kind", choices=("mono", "multi"), default="mono")
    p.add_argument("--f0", type=float, default=1.0)
    p.add_argument("--fs", type=float, default=256.0)
    p.add_argument("--harmonics", type=int, default=5)
    p.add_argument("--duration", type=float, default=8.0)
    p.add_argument("--raw", action="store_true", help="raw f32 + sidecar")
    p.add_argument("--name", default="signal")
    p.set_defaults(func=cmd_gen_signal)

    p = sub.add_parser("infer", help="full inference over signal windows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--step", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("signals", nargs="+")
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, out_dir)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
