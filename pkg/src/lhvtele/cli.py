"""Command line entry point.

Exit status: 0 when every check passes, 1 on a statistical failure, 2 on a
usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from . import harness
from .protocol import PovmError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise harness.UsageError(message)


def _vector(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lhvtele", description="Verify the classical teleportation protocol by simulation.")
    p.add_argument("--mode", choices=harness.MODES, required=True)
    p.add_argument("--seed", type=int, default=0, help="master seed (64-bit)")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--a", type=_vector, help="Bloch vector of the state, x,y,z")
    p.add_argument("--b", type=_vector, help="measurement direction, x,y,z")
    p.add_argument("--povm", help="JSON file with an array of POVM vectors")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--sigmas", type=float, default=4.0, help="per-check tolerance in standard errors")
    p.add_argument("--budget", type=float, default=2.0, help="bit budget for --mode fidelity")
    return p


def _entropy_csv(payload: dict, stats: harness.StatsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for key, val in payload.items():
        if isinstance(val, float):
            w.writerow(["value", key, val, "", "", "", ""])
    return buf.getvalue() + stats.to_csv()


def run_cli(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.mode == "povm" and not args.povm:
            raise harness.UsageError("--mode povm requires --povm FILE")
        config = harness.ExperimentConfig(
            mode=args.mode, master_seed=args.seed, trials=args.trials, a=args.a, b=args.b,
            povm_file=args.povm, tolerance_sigmas=args.sigmas, output_format=args.format,
            budget=args.budget,
        )
        payload, stats = harness.run(config)
    except (harness.UsageError, PovmError, ValueError) as exc:
        print(f"lhvtele: error: {exc}", file=sys.stderr)
        return 2
    if args.format == "json":
        out.write(json.dumps(payload, indent=2, sort_keys=True, default=harness._jsonable) + "\n")
    elif args.mode == "entropy":
        out.write(_entropy_csv(payload, stats))
    else:
        out.write(stats.to_csv())
    return 0 if stats.passed else 1


def main() -> int:
    return run_cli()
