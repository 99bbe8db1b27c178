"""CLI: export a checkpoint, optionally verifying parity.

Exit codes: 0 success, 1 parity failure, 2 validation/conversion error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from streamtcn import EngineError

from .errors import ExportError, ParityError
from .export import export_checkpoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamtcn-export",
        description="Convert PyTorch sequential 1D CNN checkpoints to the "
                    "streaming engine's manifest format",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write manifest + weight blob")
    p.add_argument("--checkpoint", required=True, help="state_dict .pt file")
    p.add_argument("--config", required=True,
                   help="JSON architecture description")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verify", type=int, default=0, metavar="N",
                   help="check parity on N random windows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = export_checkpoint(args.checkpoint, args.config, args.out,
                                   verify=args.verify, seed=args.seed,
                                   tol=args.tol)
    except ParityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ExportError, EngineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {report.manifest_path} and {report.weights_path}")
    if report.parity is not None:
        print(report.parity.describe())
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
