"""Command-line entry point.

Each subcommand drives the staged pipeline up to (and including) its own
stage by default; --stages overrides the selection explicitly, in which
case missing cached dependencies are an error.  Exit codes: 0 success,
2 precondition violations, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import sys

from .errors import NumericalError, PreconditionError, PscatError
from .harness import STAGE_ORDER, ExperimentConfig, emit_plots, run


def _common(sub):
    sub.add_argument("--config", required=True, help="JSON experiment config")
    sub.add_argument("--out", default="runs", help="output/cache directory")
    sub.add_argument(
        "--stages",
        default=None,
        help="comma-separated stage override (default: chain up to the subcommand)",
    )
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pscat",
        description="phaseless scattering laboratory: synthesize |u_sc| data "
        "and recover the medium",
    )
    subs = ap.add_subparsers(dest="command", required=True)
    for stage in STAGE_ORDER:
        sub = subs.add_parser(stage, help=f"run the pipeline through {stage!r}")
        _common(sub)
    plot = subs.add_parser("plot", help="emit plain-text plot data")
    _common(plot)
    plot.add_argument(
        "--plots",
        required=True,
        help="selector: modulus, retrieved_phase, gating, tau_misfit or c_slice",
    )
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            config = ExperimentConfig.from_dict(
                {**config.raw, "seed": int(args.seed)}
            )
        if args.command == "plot":
            manifest = run(config, stages=[], out=args.out)
            files = emit_plots(config, manifest.out_dir, args.plots)
            for f in files:
                print(f)
            return 0
        if args.stages is not None:
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        else:
            stages = STAGE_ORDER[: STAGE_ORDER.index(args.command) + 1]
        manifest = run(config, stages=stages, out=args.out)
        print(f"run {manifest.config_hash} complete in {manifest.out_dir}")
        for stage, secs in manifest.timings.items():
            print(f"  {stage}: {secs:.2f}s" + ("  (cached)" if secs == 0 else ""))
        return 0
    except PreconditionError as e:
        print(f"precondition error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except PscatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
