"""Truncated weighted Bergman spaces H(k phi) spanned by monomials of degree <= D.

Monomials are expanded about the domain center and handled in a
diagonally scaled form: ``m_a(z) = (z - c)^a exp(-k phi(z)/2) / ||(z - c)^a||``,
with every magnitude assembled in log space. Without that scaling the Gram
matrix of monomials spans hundreds of orders of magnitude once k grows.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .geometry import Ball, QuadratureGrid
from .weights import WeightFunction

log = logging.getLogger(__name__)

DROP_TOL = 1e-10
PSD_TOL = 1e-12


class BasisError(ValueError):
    pass


def multi_indices(n: int, degree: int) -> list[tuple[int, ...]]:
    """All multi-indices with ``|a| <= degree``, graded by total degree."""
    out = []
    for d in range(degree + 1):
        level = [a for a in itertools.product(range(d + 1), repeat=n) if sum(a) == d]
        out.extend(sorted(level, reverse=True))
    return out


def _log_monomials(points: np.ndarray, alphas: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Complex ``log (z-c)^a`` (real part log-magnitude, imaginary part phase)."""
    w = points - center
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    # 0 * log 0 counts as 0 so that z^0 = 1 everywhere
    out = np.zeros((points.shape[0], alphas.shape[0]), dtype=complex)
    for j in range(points.shape[1]):
        a = alphas[:, j][None, :].astype(float)
        with np.errstate(invalid="ignore"):
            out += np.where(a > 0, a * logw[:, j:j + 1], 0.0)
    return out


@dataclass(frozen=True)
class GramMatrix:
    """Gram matrix ``G_ab = int z^a conj(z^b) e^{-k phi} dlambda`` held as
    ``G = diag(s) scaled diag(s)`` with ``log s_a = log_diag_a / 2``."""

    scaled: np.ndarray
    log_diag: np.ndarray
    alphas: np.ndarray
    k: float
    degree: int
    weight: Optional[WeightFunction] = None
    grid: Optional[QuadratureGrid] = None

    @property
    def matrix(self) -> np.ndarray:
        s = np.exp(0.5 * self.log_diag)
        return s[:, None] * self.scaled * s[None, :]

    @classmethod
    def from_array(cls, g) -> "GramMatrix":
        g = np.asarray(g, dtype=complex)
        d = g.diagonal().real
        if np.any(d <= 0):
            raise BasisError("Gram matrix has a non-positive diagonal entry")
        s = 1.0 / np.sqrt(d)
        return cls(s[:, None] * g * s[None, :], np.log(d), np.zeros((g.shape[0], 1), dtype=int), 0.0, -1)


def _scaled_values(points, alphas, center, kphi, log_half_diag):
    lm = _log_monomials(points, alphas, center)
    return np.exp(lm - (0.5 * kphi[:, None] + log_half_diag[None, :]))


def check_resolution(grid: QuadratureGrid, degree: int) -> None:
    need = 2 * degree + 2
    if min(grid.resolution) < need:
        raise BasisError(f"grid resolution {grid.resolution} too coarse for degree {degree}: "
                         f"need >= {need} nodes per axis")


def gram_matrix(grid: QuadratureGrid, k: float, phi: WeightFunction, degree: int,
                check: bool = True) -> GramMatrix:
    if check:
        check_resolution(grid, degree)
    alphas = np.array(multi_indices(grid.dimension, degree), dtype=int)
    center = grid.domain.center
    kphi = k * phi(grid.nodes)
    lm = _log_monomials(grid.nodes, alphas, center)
    logw = np.log(grid.weights)
    log_diag = logsumexp(logw[:, None] + 2.0 * lm.real - kphi[:, None], axis=0)
    v = np.exp(lm + (0.5 * logw[:, None] - 0.5 * kphi[:, None] - 0.5 * log_diag[None, :]))
    scaled = v.T @ np.conj(v)
    scaled = 0.5 * (scaled + scaled.conj().T)
    if not np.all(np.isfinite(scaled)) or not np.all(np.isfinite(log_diag)):
        raise BasisError("non-finite Gram matrix entries")
    return GramMatrix(scaled, log_diag, alphas, float(k), degree, phi, grid)


def pivoted_cholesky(a: np.ndarray, drop_tol: float = DROP_TOL, blocks: Optional[Sequence[int]] = None):
    """Pivoted Cholesky ``a[p][:, p] ~ L L^H`` of a Hermitian PSD matrix.

    Pivots are chosen by largest remaining diagonal. With ``blocks`` (a block
    label per row, e.g. the total degree) every pivot in a lower block is taken
    before any pivot of a higher one, keeping the resulting basis graded.
    A candidate whose remaining diagonal falls below ``drop_tol`` times the
    first pivot is dropped.

    Returns ``(L, piv, dropped)`` where ``L`` is ``rank x rank`` lower triangular
    and ``piv`` lists the retained rows in pivot order.
    """
    a = np.array(a, dtype=complex, copy=True)
    m = a.shape[0]
    labels = np.zeros(m, dtype=int) if blocks is None else np.asarray(blocks)
    diag = a.diagonal().real.copy()
    scale = max(float(np.max(np.abs(diag))), np.finfo(float).tiny)
    if np.min(diag) < -PSD_TOL * scale:
        raise BasisError(f"Gram matrix is indefinite: diagonal entry {np.min(diag):.3e}")
    L = np.zeros((m, m), dtype=complex)
    active = np.ones(m, dtype=bool)
    piv: list[int] = []
    dropped: list[int] = []
    first = None
    for block in np.unique(labels):
        while True:
            cand = np.flatnonzero(active & (labels == block))
            if cand.size == 0:
                break
            j = int(cand[np.argmax(diag[cand])])
            d = diag[j]
            if first is None:
                first = d
            if d < -PSD_TOL * scale:
                raise BasisError(f"Gram matrix is indefinite beyond tolerance: pivot {d:.3e}")
            if first <= 0 or d <= drop_tol * first:
                dropped.extend(int(c) for c in cand)
                active[cand] = False
                break
            r = len(piv)
            rest = np.flatnonzero(active)
            col = a[rest, j] - L[rest, :r] @ np.conj(L[j, :r])
            L[rest, r] = col / math.sqrt(d)
            active[j] = False
            piv.append(j)
            diag[rest] -= np.abs(L[rest, r]) ** 2
    if not piv:
        raise BasisError("orthonormalization retained no directions (N_D = 0)")
    piv_arr = np.array(piv, dtype=int)
    return L[piv_arr][:, : len(piv)], piv_arr, sorted(dropped)


@dataclass(frozen=True)
class TruncatedBasis:
    """Orthonormal basis ``e_j = sum_l C_jl m_{piv_l}`` of the retained monomials.

    ``chol`` is the Cholesky factor of the scaled Gram on the retained set, so
    the coefficient matrix in scaled coordinates is ``chol^{-1}``.
    """

    k: float
    degree: int
    alphas: np.ndarray
    retained: np.ndarray
    chol: np.ndarray
    log_diag: np.ndarray
    center: np.ndarray
    weight: Optional[WeightFunction] = None
    grid: Optional[QuadratureGrid] = None
    dropped: tuple = field(default=())

    @property
    def dim(self) -> int:
        return self.retained.shape[0]

    @property
    def dimension(self) -> int:
        return self.alphas.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        """Total degree of each basis function (graded pivoting keeps these nondecreasing)."""
        return np.maximum.accumulate(self.alphas[self.retained].sum(axis=1))

    @property
    def coeff(self) -> np.ndarray:
        """Coefficients against raw monomials ``(z - c)^a``: ``e_j = sum_a coeff[j, a] (z - c)^a``."""
        c = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        full = np.zeros((self.dim, self.alphas.shape[0]), dtype=complex)
        full[:, self.retained] = c * np.exp(-0.5 * self.log_diag[self.retained])[None, :]
        return full

    def _kphi(self, points):
        if self.weight is None:
            return np.zeros(points.shape[0])
        return self.k * self.weight(points)

    def weighted_values(self, points) -> np.ndarray:
        """``e_j(z) exp(-k phi(z)/2)``, shape ``(m, N_D)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        return self._weighted(pts, self._kphi(pts))

    def _weighted(self, pts, kphi):
        sel = self.alphas[self.retained]
        m = _scaled_values(pts, sel, self.center, kphi, 0.5 * self.log_diag[self.retained])
        return solve_triangular(self.chol, m.T, lower=True, check_finite=False).T

    def values(self, points) -> np.ndarray:
        """Unweighted ``e_j(z)``; overflows once ``k phi`` exceeds ~1400."""
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        kphi = self._kphi(pts)
        return self._weighted(pts, kphi) * np.exp(0.5 * kphi)[:, None]

    @cached_property
    def grid_values(self) -> np.ndarray:
        if self.grid is None:
            raise BasisError("basis has no quadrature grid attached")
        return self.weighted_values(self.grid.nodes)

    def density(self, points) -> np.ndarray:
        return np.sum(np.abs(self.weighted_values(points)) ** 2, axis=1)

    def kernel(self, z, w) -> np.ndarray:
        """Kernel matrix ``K(z_a, w_b) = sum_j e_j(z_a) conj(e_j(w_b))``."""
        return self.values(z) @ np.conj(self.values(w)).T

    def gram_residual(self, grid: Optional[QuadratureGrid] = None) -> float:
        """``max_ij |<e_i, e_j> - delta_ij|`` recomputed by quadrature."""
        grid = grid or self.grid
        e = self.grid_values if grid is self.grid else self.weighted_values(grid.nodes)
        g = (e * grid.weights[:, None]).T @ np.conj(e)
        return float(np.max(np.abs(g - np.eye(self.dim))))


def orthonormalize(gram, drop_tol: float = DROP_TOL) -> TruncatedBasis:
    if not isinstance(gram, GramMatrix):
        gram = GramMatrix.from_array(gram)
    blocks = gram.alphas.sum(axis=1)
    L, piv, dropped = pivoted_cholesky(gram.scaled, drop_tol, blocks)
    if dropped:
        log.info("orthonormalize: dropped %d of %d monomial directions (k=%g, D=%d)",
                 len(dropped), gram.scaled.shape[0], gram.k, gram.degree)
    center = gram.grid.domain.center if gram.grid is not None else np.zeros(gram.alphas.shape[1], dtype=complex)
    return TruncatedBasis(gram.k, gram.degree, gram.alphas, piv, L, gram.log_diag, center,
                          gram.weight, gram.grid, tuple(dropped))


def build_basis(grid: QuadratureGrid, k: float, phi: WeightFunction, degree: int,
                drop_tol: float = DROP_TOL, check: bool = True) -> TruncatedBasis:
    return orthonormalize(gram_matrix(grid, k, phi, degree, check=check), drop_tol)


def kernel_eval(basis: TruncatedBasis, z, w) -> complex:
    return complex(basis.kernel(z, w)[0, 0])


def bergman_density(basis: TruncatedBasis, z, scaled: bool = False) -> np.ndarray:
    """``rho_k(z) = K(z, z) e^{-k phi(z)}``, divided by ``k^n`` when ``scaled``."""
    rho = basis.density(z)
    return rho / basis.k ** basis.dimension if scaled else rho


def density_limit(phi: WeightFunction, z) -> np.ndarray:
    """Pointwise limit ``det(ddbar phi(z)) / pi^n`` of the scaled density."""
    h = phi.hessian(z)
    return np.linalg.det(h).real / math.pi ** h.shape[-1]


def degree_for(k: float, r_max: float, c_d: float = 3.0, offset: int = 10) -> int:
    return int(math.ceil(c_d * k * r_max**2)) + offset


def truncation_tail_indicator(basis: TruncatedBasis, grid: Optional[QuadratureGrid] = None,
                              region=None) -> float:
    """Max over grid nodes of the share of ``rho_k`` carried by top-degree basis functions.

    ``region`` restricts the scan to a compact subset (a ``Ball`` or a boolean
    node mask). Near the boundary of a bounded domain the top degree always
    carries an O(1/D) share, so a meaningful certificate needs a compact set.
    An empty region yields 0.
    """
    grid = grid or basis.grid
    e = basis.grid_values if grid is basis.grid else basis.weighted_values(grid.nodes)
    if region is None:
        mask = np.ones(grid.size, dtype=bool)
    elif isinstance(region, Ball):
        mask = region.contains(grid.nodes)
    else:
        mask = np.asarray(region, dtype=bool)
    if not mask.any():
        return 0.0
    e = e[mask]
    top = basis.degrees == basis.degree
    rho = np.sum(np.abs(e) ** 2, axis=1)
    tail = np.sum(np.abs(e[:, top]) ** 2, axis=1)
    return float(np.max(tail / rho))
