"""Toeplitz operators on truncated Bergman spaces and their spectral invariants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import qmc

from .bergman import TruncatedBasis
from .geometry import Ball, DomainSpec, QuadratureGrid
from .weights import TestFunction


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class Symbol:
    """Real symbol g of a Toeplitz operator.

    ``kind`` is ``exp_minus_one`` (g = exp(-s u) - 1, supported in supp u),
    ``exp`` (g = exp(-s u), not compactly supported) or ``plain``.
    """

    kind: str
    func: Callable[[np.ndarray], np.ndarray]
    support: Optional[Ball]
    test_function: Optional[TestFunction] = None
    scale: float = 1.0

    def __call__(self, points) -> np.ndarray:
        return np.asarray(self.func(points), dtype=float)

    @classmethod
    def exp_minus_one(cls, u: TestFunction, scale: float = 1.0) -> "Symbol":
        s = float(scale)
        return cls("exp_minus_one", lambda z: np.expm1(-s * u(z)), u.support, u, s)

    @classmethod
    def exp(cls, u: TestFunction, scale: float = 1.0) -> "Symbol":
        s = float(scale)
        return cls("exp", lambda z: np.exp(-s * u(z)), None, u, s)

    @classmethod
    def plain(cls, g: Callable[[np.ndarray], np.ndarray], support: Optional[Ball]) -> "Symbol":
        return cls("plain", g, support)

    @property
    def compact(self) -> bool:
        return self.kind != "exp"


@dataclass(frozen=True)
class ToeplitzMatrix:
    basis: TruncatedBasis
    symbol: Optional[Symbol]
    matrix: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape


def _grid_values(basis: TruncatedBasis, grid: Optional[QuadratureGrid]):
    if grid is None or grid is basis.grid:
        return basis.grid, basis.grid_values
    return grid, basis.weighted_values(grid.nodes)


def toeplitz_matrix(basis: TruncatedBasis, grid: Optional[QuadratureGrid], symbol: Symbol) -> ToeplitzMatrix:
    """``M_ij = int conj(e_i) g e_j e^{-k phi} dlambda`` on the quadrature grid."""
    grid, e = _grid_values(basis, grid)
    if symbol.support is not None and not grid.domain.ball_inside(symbol.support):
        raise OperatorError(f"symbol support {symbol.support} leaves the domain")
    g = symbol(grid.nodes)
    nz = np.flatnonzero(g)
    ev = e[nz]
    m = np.conj(ev).T @ ((grid.weights[nz] * g[nz])[:, None] * ev)
    m = 0.5 * (m + np.conj(m).T)
    return ToeplitzMatrix(basis, symbol, m)


def _matrix(t) -> np.ndarray:
    return t.matrix if isinstance(t, ToeplitzMatrix) else np.asarray(t)


def trace_toeplitz(t: Union[ToeplitzMatrix, np.ndarray]) -> float:
    return float(np.trace(_matrix(t)).real)


def trace_formula_rhs(basis: TruncatedBasis, grid: Optional[QuadratureGrid], g) -> float:
    """``int K(z, z) g(z) e^{-k phi(z)} dlambda``, via the Bergman density."""
    grid, e = _grid_values(basis, grid)
    rho = np.sum(np.abs(e) ** 2, axis=1)
    gv = g(grid.nodes) if callable(g) else np.asarray(g)
    return float(np.sum(grid.weights * rho * gv))


def _cholesky(a: np.ndarray, what: str):
    try:
        return cho_factor(a, lower=True)
    except LinAlgError:
        lam = float(np.linalg.eigvalsh(a)[0])
        raise OperatorError(f"{what} is not positive definite (smallest eigenvalue {lam:.6e})") from None


def log_fredholm_det(t: Union[ToeplitzMatrix, np.ndarray]) -> float:
    """``log det(I + M)`` from the Cholesky factor of ``I + M``."""
    m = _matrix(t)
    c, _ = _cholesky(np.eye(m.shape[0]) + m, "I + M")
    return float(2.0 * np.sum(np.log(np.diag(c).real)))


def fredholm_series_oracle(basis: TruncatedBasis, grid: Optional[QuadratureGrid], g, max_rank: int = 3) -> float:
    """Brute-force sum of the Fredholm series over ``Omega^n`` with the grid as the quadrature.

    The n-th term is ``(1/n!) int det[K(z_i, z_j)] prod g(z_l) e^{-k phi(z_l)} dlambda``.
    For a rank-N projection kernel every term with ``n > N`` vanishes.
    Cost grows like ``|grid|^N`` so ranks above ``max_rank`` (at most 3) are refused.
    """
    n_d = basis.dim
    if n_d > min(max_rank, 3):
        raise OperatorError(f"series oracle refuses N_D = {n_d} > {min(max_rank, 3)} (cost |grid|^N_D)")
    grid, e = _grid_values(basis, grid)
    gv = g(grid.nodes) if callable(g) else np.asarray(g)
    a = grid.weights * gv
    keep = np.flatnonzero(a)
    if keep.size == 0:
        return 1.0
    e, a = e[keep], a[keep]
    kw = e @ np.conj(e).T  # K(z_i, z_j) e^{-k(phi_i + phi_j)/2}
    d = np.real(kw.diagonal())
    total = 1.0 + float(np.sum(a * d))
    if n_d >= 2:
        # 2x2 minors: K_ii K_jj - |K_ij|^2
        det2 = d[:, None] * d[None, :] - np.abs(kw) ** 2
        total += 0.5 * float(a @ det2 @ a)
    if n_d >= 3:
        t3 = 0.0
        for i in range(keep.size):
            # expand the 3x3 determinant along the row of node i
            ki = kw[i]
            det3 = (d[i] * det2
                    - ki[:, None] * (np.conj(ki)[:, None] * d[None, :] - kw * np.conj(ki)[None, :])
                    + ki[None, :] * (np.conj(ki)[:, None] * kw.T - d[:, None] * np.conj(ki)[None, :]))
            t3 += a[i] * float(np.real(a @ det3 @ a))
        total += t3 / 6.0
    return total


def probe_points(domain: DomainSpec, support: Optional[Ball], n_in: int = 20, n_out: int = 5) -> np.ndarray:
    """Quasi-random probes: ``n_in`` inside the support, ``n_out`` in the domain outside it."""
    n = domain.dimension
    halton = qmc.Halton(d=2 * n, scramble=False)
    pts = []

    def draw(box):
        x = halton.random(1)[0]
        return np.array([complex(lo + (hi - lo) * x[2 * j], lo2 + (hi2 - lo2) * x[2 * j + 1])
                         for j, (lo, hi, lo2, hi2) in enumerate(box)])

    if support is not None and n_in > 0:
        c = np.asarray(support.center)
        box = [(z.real - support.radius, z.real + support.radius,
                z.imag - support.radius, z.imag + support.radius) for z in c]
        while len(pts) < n_in:
            p = draw(box)
            if support.contains(p[None, :], closed=False)[0]:
                pts.append(p)
    n_outside, bb = 0, domain.bounding_box()
    while n_outside < n_out:
        p = draw(bb)
        inside_supp = support is not None and support.contains(p[None, :])[0]
        if domain.contains(p[None, :])[0] and not inside_supp:
            pts.append(p)
            n_outside += 1
    return np.array(pts)


def key_lemma_residual(basis_phi: TruncatedBasis, basis_phiu: TruncatedBasis, grid: Optional[QuadratureGrid],
                       u: TestFunction, s: float = 1.0, probes: Optional[np.ndarray] = None) -> float:
    """Compare ``T^{-1}_{exp(-s k u)} K_{k phi}(., w)`` with ``K_{k(phi + s u)}(., w)`` on probes.

    Returns ``max |h_w(z) - K'(z, w)| / (1 + |K'(z, w)|)`` over probe pairs.
    """
    if basis_phi.k != basis_phiu.k or basis_phi.degree != basis_phiu.degree:
        raise OperatorError("key lemma needs both bases at the same k and degree")
    grid = grid or basis_phi.grid
    if probes is None:
        probes = probe_points(grid.domain, u.support)
    k = basis_phi.k
    m = toeplitz_matrix(basis_phi, grid, Symbol.exp_minus_one(u, s * k)).matrix
    fac = _cholesky(np.eye(basis_phi.dim) + m, "I + M")
    coeff = np.conj(basis_phi.values(probes)).T  # column w: coefficients of K(., w)
    h = basis_phi.values(probes) @ cho_solve(fac, coeff)
    target = basis_phiu.kernel(probes, probes)
    return float(np.max(np.abs(h - target) / (1.0 + np.abs(target))))


def change_of_basis(basis_from: TruncatedBasis, basis_to: TruncatedBasis,
                    grid: Optional[QuadratureGrid] = None) -> np.ndarray:
    """``S_ij = <f_j, e_i>_{k phi}`` expressing ``f = basis_to`` in ``e = basis_from``."""
    grid, e = _grid_values(basis_from, grid)
    f = basis_to.values(grid.nodes) * np.exp(-0.5 * basis_from.k * basis_from.weight(grid.nodes))[:, None]
    return (np.conj(e) * grid.weights[:, None]).T @ f


def basis_independence_residual(t: ToeplitzMatrix, basis_other: TruncatedBasis,
                                grid: Optional[QuadratureGrid] = None) -> float:
    """``|log det(I + M) - log det(S^{-1} (I + M) S)|`` for the change of basis ``S``."""
    a = np.eye(t.basis.dim) + t.matrix
    s = change_of_basis(t.basis, basis_other, grid)
    conj = np.linalg.solve(s, a @ s)
    sign, logdet = np.linalg.slogdet(conj)
    return abs(log_fredholm_det(t) - float(logdet.real)) + abs(sign - 1.0)


def jacobi_fd_check(path: Callable[[float], Union[ToeplitzMatrix, np.ndarray]], t0: float, h: float = 1e-4):
    """Central difference of ``log det(I + M(t))`` against ``tr[(I + M)^{-1} dM]`` at ``t0``.

    Both sides use the same symmetric stencil ``t0 +- h``.
    """
    m0, mp, mm = (_matrix(path(t)) for t in (t0, t0 + h, t0 - h))
    eye = np.eye(m0.shape[0])
    try:
        fd = (log_fredholm_det(mp) - log_fredholm_det(mm)) / (2.0 * h)
    except OperatorError as exc:
        raise OperatorError(f"singular I + M in the stencil around t0={t0}: {exc}") from None
    fac = _cholesky(eye + m0, "I + M(t0)")
    tr = float(np.trace(cho_solve(fac, (mp - mm) / (2.0 * h))).real)
    return fd, tr


def smallest_eigenvalue(t: Union[ToeplitzMatrix, np.ndarray]) -> float:
    return float(np.linalg.eigvalsh(_matrix(t))[0])


def projection_spectrum(basis: TruncatedBasis, grid: Optional[QuadratureGrid] = None) -> np.ndarray:
    """Nonzero spectrum of the discretized kernel operator ``f -> int K(., w) f(w) dmu(w)``.

    On the grid the operator is ``W^{1/2} E E^H W^{1/2}``; its nonzero eigenvalues
    are those of ``E^H W E``.
    """
    grid, e = _grid_values(basis, grid)
    ew = e * np.sqrt(grid.weights)[:, None]
    return np.linalg.eigvalsh(np.conj(ew).T @ ew)


def log_det_scaled(t: ToeplitzMatrix) -> float:
    """``(1/k^{n+1}) log det(I + M)``."""
    b = t.basis
    return log_fredholm_det(t) / b.k ** (b.dimension + 1)

