"""Command-line front end for the experiment pipeline.

Subcommands mirror the pipeline stages: ``generate`` (instances +
certificates), ``run`` (sampling matrix), ``analyze`` (tables), ``collapse``
(scaling fits), ``verify`` (recompute a sample of records), ``report``
(plain-text digest).  Exit codes: 0 success, 2 validation problem, 3 missing
dependency/artifact, 4 resource limit.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import ExperimentConfig, load_config
from .errors import DependencyError, FitFailureError, ResourceError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DEPENDENCY = 3
EXIT_RESOURCE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaclab",
        description="benchmark laboratory for encoded-vs-unencoded annealing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("generate", "write instances and cross-checked ground certificates"),
        ("run", "sample the full run matrix (resumable)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="override the configured output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker tasks (default 1)")

    p = sub.add_parser("analyze", help="emit analysis tables from run records")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--resamples", type=int, default=2000,
                   help="bootstrap resamples for estimates (default 2000)")

    p = sub.add_parser("collapse", help="fit scaling forms and emit overlays")
    p.add_argument("--out", required=True, help="run output directory")

    p = sub.add_parser("verify", help="recompute a sample of records")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--fraction", type=float, default=0.01,
                   help="fraction of records to recheck (default 0.01)")

    p = sub.add_parser("report", help="print a plain-text digest")
    p.add_argument("--out", required=True, help="run output directory")
    return parser


def _load_effective_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    return config.with_overrides(**overrides) if overrides else config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            config = _load_effective_config(args)
            result = harness.cmd_generate(config, threads=args.threads)
            print(
                f"generated {result.n_generated} certificates "
                f"({result.n_skipped} already present, "
                f"{len(result.flagged)} flagged)"
            )
            for d in result.flagged:
                print(
                    f"flagged L={d['L']} instance={d['instance']}: "
                    f"dp={d['dp_energy']} pticm={d['pticm_energy']}",
                    file=sys.stderr,
                )
        elif args.command == "run":
            config = _load_effective_config(args)
            result = harness.cmd_run(config, threads=args.threads)
            print(
                f"completed {result.n_completed} records "
                f"({result.n_skipped} already done, "
                f"{result.n_excluded_instances} flagged instances excluded)"
            )
        elif args.command == "analyze":
            written = harness.cmd_analyze(args.out, n_resamples=args.resamples)
            for path in written:
                print(f"wrote {path}")
        elif args.command == "collapse":
            written = harness.cmd_collapse(args.out)
            for path in written:
                print(f"wrote {path}")
        elif args.command == "verify":
            result = harness.cmd_verify(args.out, fraction=args.fraction)
            if result.failures:
                print(f"verify: {len(result.failures)} of {result.n_checked} "
                      "checked records FAILED", file=sys.stderr)
                for msg in result.failures:
                    print(f"  {msg}", file=sys.stderr)
                return EXIT_DEPENDENCY
            print(f"verify: {result.n_checked} records recomputed, all match")
        elif args.command == "report":
            print(harness.cmd_report(args.out), end="")
    except ValueError as exc:  # InputError family, bad numerics
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ResourceError, MemoryError) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DependencyError, FitFailureError, FileNotFoundError) as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
