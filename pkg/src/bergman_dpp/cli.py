"""Command line entry point: ``bergman-dpp {converge,identities,sample}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dpp
from .harness import (ConfigError, ExperimentConfig, emit_report, run_convergence_experiment,
                      run_identity_suite, run_sampling, samples_to_json, with_seed)
from .weights import AdmissibilityError


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (schema 1); defaults are built in")
    common.add_argument("--out", type=Path, help="output file (default: config output.path, else stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="report format (default: config output.format)")
    common.add_argument("--seed", type=_u64, help="master seed for Monte Carlo streams (overrides mc.seed)")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bergman-dpp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("converge", parents=[common], help="scaled log Laplace functional vs -energy over k")
    ident = sub.add_parser("identities", parents=[common], help="run the identity battery")
    ident.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo checks")
    ident.add_argument("--inject-fault", choices=("gram",), help=argparse.SUPPRESS)
    sub.add_parser("sample", parents=[common], help="draw DPP samples and export them")
    return p


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    config = with_seed(config, args.seed)
    fmt = args.format or config.output.format
    out = args.out or config.output.path

    if args.command == "converge":
        try:
            report = run_convergence_experiment(config, threads=args.threads)
        except AdmissibilityError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        text = emit_report(report, None, fmt)
        _write(text, out)
        return 0 if report.all_valid else 1

    if args.command == "identities":
        if args.no_mc:
            config = replace(config, mc=replace(config.mc, enabled=False))
        report = run_identity_suite(config, threads=args.threads, fault=args.inject_fault)
        _write(report.to_csv() if fmt == "csv" else report.to_json(), out)
        for c in report.checks:
            if not c.ok:
                print(f"{c.status}: {c.name} residual={c.residual:.3e} tol={c.tolerance:.1e} {c.detail}",
                      file=sys.stderr)
        return 0 if report.all_passed else 1

    run = run_sampling(config, seed=args.seed, threads=args.threads)
    if fmt == "csv":
        dpp.export_samples_csv(run.samples, sys.stdout if out is None else out)
    else:
        _write(samples_to_json(run), out)
    if not run.valid:
        print(f"error: invalid sampling run (projection error {run.projection_error:.3e})", file=sys.stderr)
    return 0 if run.valid else 1


if __name__ == "__main__":
    sys.exit(main())
