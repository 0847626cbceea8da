"""Monge-Ampere energy of ``phi + u`` and its derivative along ``t -> phi + t u``.

Normalization: ``(1/n!) (dd^c psi)^n = det(ddbar psi) / pi^n dlambda``, so the
mixed product ``(dd^c a)^j ^ (dd^c b)^{n-j}`` has density
``sigma_j(A, B) j! (n-j)! / pi^n``, where ``sigma_j`` is the coefficient of
``s^j t^{n-j}`` in ``det(s A + t B)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import QuadratureGrid, gauss_legendre
from .weights import AdmissibilityError, TestFunction, WeightFunction, check_admissible


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    per_j: tuple = field(default=())
    derivative_check: float = 0.0


def mixed_coefficients(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``sigma_j(A, B)`` for j = 0..n, stacked over leading axes: shape ``(..., n+1)``.

    Evaluates ``p(s) = det(s A + B) = sum_j sigma_j s^j`` at s = 0..n and solves
    the Vandermonde system.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.shape[-1]
    nodes = np.arange(n + 1, dtype=float)
    vals = np.stack([np.linalg.det(s * a + b).real for s in nodes], axis=-1)
    vander = np.vander(nodes, n + 1, increasing=True)
    return np.linalg.solve(vander, vals.reshape(-1, n + 1).T).T.reshape(vals.shape)


def mixed_ma_density(a: np.ndarray, b: np.ndarray, j: int) -> np.ndarray:
    """Density of ``(dd^c)^j`` of A wedge ``(dd^c)^{n-j}`` of B w.r.t. Lebesgue measure."""
    n = np.asarray(a).shape[-1]
    if not 0 <= j <= n:
        raise ValueError(f"mixed degree j={j} outside 0..{n}")
    sigma = mixed_coefficients(a, b)[..., j]
    return sigma * math.factorial(j) * math.factorial(n - j) / math.pi**n


def _hessians(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid):
    """Hessians restricted to the support nodes of u (u vanishes elsewhere)."""
    mask = u.support.contains(grid.nodes)
    nodes = grid.nodes[mask]
    return grid.weights[mask], u(nodes), phi.hessian(nodes), u.hessian(nodes)


def _energy_value(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid, t: float = 1.0) -> tuple:
    """Per-j summands of ``E(phi + t u)``; no admissibility check."""
    n = grid.dimension
    if u.is_zero or t == 0.0:
        return (0.0,) * (n + 1)
    w, uv, hp, hu = _hessians(phi, u, grid)
    sig = mixed_coefficients(hp + t * hu, hp)
    terms = []
    for j in range(n + 1):
        dens = sig[:, j] * math.factorial(j) * math.factorial(n - j) / math.pi**n
        terms.append(float(np.sum(w * t * uv * dens)) / math.factorial(n + 1))
    return tuple(terms)


def energy_derivative(phi: WeightFunction, u: TestFunction, t: float, grid: QuadratureGrid) -> float:
    """``(1/n!) int u (dd^c(phi + t u))^n = int u det(ddbar phi + t ddbar u) / pi^n``."""
    if u.is_zero:
        return 0.0
    n = grid.dimension
    w, uv, hp, hu = _hessians(phi, u, grid)
    det = np.linalg.det(hp + t * hu).real
    return float(np.sum(w * uv * det)) / math.pi**n


def default_t_grid(points: int = 11) -> np.ndarray:
    return np.arange(1, points + 1) / (points + 1)


def energy_primitive_check(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid,
                           t_grid=None, h: float = 1e-4) -> float:
    """``max_t |d/dt E(phi + t u) (central difference) - energy_derivative(t)|``."""
    if h > 1e-3:
        raise ValueError("primitive check step must be <= 1e-3")
    if u.is_zero:
        return 0.0
    ts = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    worst = 0.0
    for t in ts:
        fd = (sum(_energy_value(phi, u, grid, t + h)) - sum(_energy_value(phi, u, grid, t - h))) / (2.0 * h)
        worst = max(worst, abs(fd - energy_derivative(phi, u, t, grid)))
    return worst


def energy(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid, with_check: bool = True) -> EnergyReport:
    """``E(phi + u) = 1/(n+1)! sum_j int u (dd^c(phi+u))^j ^ (dd^c phi)^{n-j}``."""
    if u.is_zero:
        return EnergyReport(0.0, (0.0,) * (grid.dimension + 1), 0.0)
    rep = check_admissible(phi, u, grid)
    if not rep.admissible:
        raise AdmissibilityError(f"test function is not admissible: lambda_min = "
                                 f"{rep.lambda_min_t0:.3e} (t=0), {rep.lambda_min_t1:.3e} (t=1)")
    terms = _energy_value(phi, u, grid)
    check = energy_primitive_check(phi, u, grid) if with_check else float("nan")
    return EnergyReport(float(sum(terms)), terms, check)


def energy_by_t_integral(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid, nodes: int = 16) -> float:
    """``int_0^1 energy_derivative dt`` by Gauss-Legendre in t."""
    ts, ws = gauss_legendre(nodes, 0.0, 1.0)
    return float(sum(w * energy_derivative(phi, u, t, grid) for t, w in zip(ts, ws)))
