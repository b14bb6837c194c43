"""Command-line experiment runner.

    hypertransfer run <spec.json> [--seeds 0,1,2] [--out DIR]
                                  [--timeout-secs S]

Exit codes: 0 on success, 2 for spec problems (including unreadable source
files), 3 for objective failures.  Partial traces from a failed run stay
on disk.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .runner import SpecError, load_spec, run_experiment
from .transfer import ObjectiveError

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_OBJECTIVE = 3


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"seeds must be comma-separated integers, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypertransfer",
        description="Run surrogate-transfer and baseline-search experiments "
                    "from a JSON spec.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a spec")
    run.add_argument("spec", help="path to the JSON experiment spec")
    run.add_argument("--seeds", type=_parse_seeds, default=None,
                     help="comma-separated seed list overriding the spec")
    run.add_argument("--out", default=None,
                     help="output directory overriding the spec")
    run.add_argument("--timeout-secs", type=float, default=None,
                     help="external-objective timeout overriding the spec")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        if args.seeds is not None:
            if not args.seeds:
                raise SpecError("--seeds", "must be non-empty")
            spec = replace(spec, seeds=args.seeds)
        if args.out is not None:
            spec = replace(spec, out_dir=args.out)
        if args.timeout_secs is not None:
            spec = replace(spec, timeout_secs=args.timeout_secs)
        summary = run_experiment(spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except ObjectiveError as exc:
        print(f"objective failure: {exc}", file=sys.stderr)
        return EXIT_OBJECTIVE
    print(f"{summary.method}: {len(summary.seeds)} seed(s), "
          f"{summary.eval_index[-1]} evaluations each")
    for path in summary.trace_paths:
        print(f"  trace: {path}")
    print(f"  summary: {summary.summary_path}")
    print(f"  final mean best error: {summary.mean_best[-1]:.6g}")
    return EXIT_OK


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
