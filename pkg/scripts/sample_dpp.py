"""Draw projection-DPP samples, write them as CSV and compare binned intensity with rho_k."""

import argparse
import sys

import numpy as np

from bergman_dpp import dpp
from bergman_dpp.bergman import build_basis, degree_for
from bergman_dpp.geometry import DomainSpec, build_quadrature
from bergman_dpp.weights import WeightFunction


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--degree", type=int, help="default: the degree rule D(k)")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV of all points")
    args = p.parse_args()

    d = args.degree if args.degree is not None else degree_for(args.k, 1.0)
    grid = build_quadrature(DomainSpec.disk(), (max(64, 2 * d + 2), max(128, 2 * d + 2)))
    basis = build_basis(grid, args.k, WeightFunction.quadratic(), d)
    samples = dpp.sample_many(basis, args.samples, args.seed, args.threads)
    if args.out:
        dpp.export_samples_csv(samples, args.out)

    bins = dpp.PolarBins.equal_area(1.0, 5, 4)
    emp = dpp.empirical_intensity(samples, bins, min_samples=min(1000, args.samples))
    expected = dpp.expected_bin_mass(basis, bins)
    rel = emp.counts / len(samples) / expected - 1
    print(f"N_D = {basis.dim}, {len(samples)} samples")
    for i, (lo, hi) in enumerate(zip(bins.r_edges[:-1], bins.r_edges[1:])):
        row = " ".join(f"{x:+7.2%}" for x in rel[i * 4:(i + 1) * 4])
        print(f"r in [{lo:.3f}, {hi:.3f}): {row}")
    print(f"max |relative deviation| = {np.max(np.abs(rel)):.2%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
