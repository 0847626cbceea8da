"""Key-lemma residual as a function of the truncation degree.

Both kernels live on the same monomial span and the same discrete inner
product, so the identity holds exactly at every D; the residual only tracks
rounding and so does not shrink as D grows.
"""

import argparse

from bergman_dpp.bergman import build_basis
from bergman_dpp.geometry import DomainSpec, build_quadrature
from bergman_dpp.operators import key_lemma_residual
from bergman_dpp.weights import TestFunction, WeightFunction


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=float, default=4.0)
    p.add_argument("--degrees", type=int, nargs="+", default=[10, 20, 30, 40])
    args = p.parse_args()

    phi = WeightFunction.quadratic()
    grid = build_quadrature(DomainSpec.disk(), (2 * max(args.degrees) + 2, 128))
    corpus = [TestFunction.bump_with_hessian_norm([c], r, n)
              for c, r, n in [(0, 0.5, 0.5), (0.2 + 0.1j, 0.4, 0.5), (-0.3j, 0.5, 0.8)]]
    print("D    " + "  ".join(f"bump{i}" .rjust(9) for i in range(len(corpus))))
    for d in args.degrees:
        b = build_basis(grid, args.k, phi, d)
        res = [key_lemma_residual(b, build_basis(grid, args.k, phi.plus(u), d), grid, u) for u in corpus]
        print(f"{d:<4} " + "  ".join(f"{r:9.2e}" for r in res))


if __name__ == "__main__":
    main()
