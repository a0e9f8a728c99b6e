"""Command-line entry point: ``nhsse run | compare | list-experiments``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_ERROR = 2


def _cmd_run(args) -> int:
    from .experiments import run_experiment, spec_from_text

    spec = spec_from_text(Path(args.config).read_text(), args.output)
    manifest = run_experiment(spec)
    for pt in manifest["points"]:
        if pt["status"] != "ok":
            print(f"point {pt['index']}: {pt['status']} {pt['error'] or ''}".rstrip())
    print(f"{spec.experiment}: {len(manifest['points'])} points, {manifest['n_failed']} failed -> {spec.output_dir}")
    return EXIT_ERROR if manifest["n_failed"] else EXIT_OK


def _cmd_compare(args) -> int:
    from .experiments import compare_runs

    report = compare_runs(args.qmc, args.oracle, args.sigma)
    for v in report["points"]:
        mark = "PASS" if v["pass"] else "FAIL"
        keys = " ".join(f"{k}={v[k]}" for k in v if k not in ("energy", "stderr", "oracle", "sigmas", "pass"))
        print(f"{mark} {keys} E={v['energy']:.6f}+-{v['stderr']:.6f} oracle={v['oracle']:.6f} "
              f"({v['sigmas']:.2f} sigma)")
    print(f"{report['n_pass']} passed, {report['n_fail']} failed at {args.sigma:g} sigma")
    return EXIT_COMPARE_FAIL if report["n_fail"] else EXIT_OK


def _cmd_list(args) -> int:
    from .experiments import EXPERIMENTS

    width = max(len(n) for n in EXPERIMENTS)
    for name, exp in EXPERIMENTS.items():
        kind = "sse" if exp.uses_sse else "exact"
        print(f"{name:<{width}}  {kind:<5}  {exp.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhsse", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides output_dir in the config)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("compare", help="compare SSE energies with an oracle CSV")
    p.add_argument("qmc")
    p.add_argument("oracle")
    p.add_argument("--sigma", type=float, default=3.0, help="pass threshold in standard errors")
    p.set_defaults(func=_cmd_compare)
    p = sub.add_parser("list-experiments", help="list experiment ids")
    p.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
