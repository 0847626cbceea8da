"""Run the k-schedule experiment and print a table of gaps and their contraction ratios."""

import argparse
import sys

from bergman_dpp.harness import ExperimentConfig, emit_report, run_convergence_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/default.json")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    cfg = ExperimentConfig.load(args.config)
    rep = run_convergence_experiment(cfg, threads=args.threads)
    print(f"E(phi+u) = {rep.energy:.12e}   (t-integral {rep.energy_t_integral:.12e})")
    print(f"{'k':>6} {'D':>4} {'N_D':>5} {'lhs':>14} {'gap':>12} {'ratio':>7} {'tail':>9} {'deriv':>9} valid")
    prev = None
    for r in rep.rows:
        ratio = "" if prev is None else f"{abs(r.gap) / abs(prev):7.3f}"
        print(f"{r.k:6g} {r.D:4d} {r.N_D:5d} {r.lhs:14.6e} {r.gap:12.4e} {ratio:>7} "
              f"{r.tail_indicator:9.1e} {r.deriv_residual:9.1e} {r.valid}")
        prev = r.gap
    if args.out:
        emit_report(rep, args.out, args.format)
    return 0 if rep.all_valid else 1


if __name__ == "__main__":
    sys.exit(main())
