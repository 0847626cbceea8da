"""Run the identity battery and print one line per check."""

import argparse
import sys
from dataclasses import replace

from bergman_dpp.harness import ExperimentConfig, run_identity_suite


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/default.json")
    p.add_argument("--no-mc", action="store_true")
    p.add_argument("--samples", type=int, help="override mc.n_samples")
    args = p.parse_args()

    cfg = ExperimentConfig.load(args.config)
    if args.no_mc:
        cfg = replace(cfg, mc=replace(cfg.mc, enabled=False))
    if args.samples:
        cfg = replace(cfg, mc=replace(cfg.mc, n_samples=args.samples))
    rep = run_identity_suite(cfg)
    for c in rep.checks:
        print(f"{c.status:>7}  {c.name:<24} residual {c.residual:10.3e}  tol {c.tolerance:8.1e}  {c.detail}")
    return 0 if rep.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
