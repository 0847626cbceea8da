"""Plurisubharmonic weights, compactly supported test functions, admissibility."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import Ball, QuadratureGrid

ScalarField = Callable[[np.ndarray], np.ndarray]
HessianField = Callable[[np.ndarray], np.ndarray]


class AdmissibilityError(ValueError):
    pass


def _as_points(z, n: Optional[int] = None) -> np.ndarray:
    pts = np.asarray(z, dtype=complex)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if n is None or pts.shape[0] == n else pts.reshape(-1, 1)
    return pts


def complex_hessian_fd(f: ScalarField, z, h: Optional[float] = None) -> np.ndarray:
    """Finite-difference complex Hessian ``d/dz_j d/dzbar_k f`` at one or many points.

    Uses central second differences in the real coordinates and returns the
    Hermitian part. ``z`` may be a single point of shape ``(n,)`` or an array
    ``(m, n)``; the result has shape ``(n, n)`` or ``(m, n, n)`` accordingly.
    """
    pts = np.asarray(z, dtype=complex)
    single = pts.ndim <= 1
    pts = pts.reshape(1, -1) if single else pts
    m, n = pts.shape
    if h is None:
        step = 1e-4 * (1.0 + np.linalg.norm(pts, axis=1))
    else:
        if not h > 0:
            raise ValueError("finite-difference step must be positive")
        step = np.full(m, float(h))

    dirs = np.zeros((2 * n, n), dtype=complex)
    for j in range(n):
        dirs[2 * j, j] = 1.0
        dirs[2 * j + 1, j] = 1j

    def ev(shift):
        vals = np.asarray(f(pts + step[:, None] * shift[None, :]), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite sample in finite-difference Hessian")
        return vals

    f0 = ev(np.zeros(n, dtype=complex))
    real_h = np.empty((m, 2 * n, 2 * n))
    for a in range(2 * n):
        real_h[:, a, a] = (ev(dirs[a]) - 2.0 * f0 + ev(-dirs[a])) / step**2
        for b in range(a + 1, 2 * n):
            d = (ev(dirs[a] + dirs[b]) - ev(dirs[a] - dirs[b])
                 - ev(dirs[b] - dirs[a]) + ev(-dirs[a] - dirs[b])) / (4.0 * step**2)
            real_h[:, a, b] = real_h[:, b, a] = d

    xx = real_h[:, 0::2, 0::2]
    yy = real_h[:, 1::2, 1::2]
    xy = real_h[:, 0::2, 1::2]  # xy[j, k] = d_xj d_yk
    hess = 0.25 * (xx + yy) + 0.25j * (xy - np.swapaxes(xy, 1, 2))
    hess = 0.5 * (hess + np.conj(np.swapaxes(hess, 1, 2)))
    return hess[0] if single else hess


@dataclass(frozen=True)
class WeightFunction:
    """Smooth real weight phi with its complex Hessian.

    ``kind`` is one of ``quadratic``, ``quadratic_diagonal``, ``custom`` or ``sum``.
    """

    kind: str
    dimension: int
    evaluate: ScalarField
    hessian_fn: Optional[HessianField] = None
    params: tuple = ()

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.evaluate(_as_points(z, self.dimension)), dtype=float)

    def hessian(self, z) -> np.ndarray:
        pts = _as_points(z, self.dimension)
        if self.hessian_fn is None:
            return complex_hessian_fd(self.evaluate, pts)
        return self.hessian_fn(pts)

    @classmethod
    def quadratic(cls, c: float = 1.0, n: int = 1) -> "WeightFunction":
        return cls.quadratic_diagonal([c] * n)

    @classmethod
    def quadratic_diagonal(cls, coeffs) -> "WeightFunction":
        cs = np.asarray(coeffs, dtype=float)
        if np.any(cs <= 0):
            raise ValueError("quadratic weight coefficients must be positive")
        n = cs.shape[0]

        def ev(z):
            return np.abs(z) ** 2 @ cs

        def hess(z):
            return np.broadcast_to(np.diag(cs).astype(complex), (z.shape[0], n, n)).copy()

        kind = "quadratic" if np.all(cs == cs[0]) else "quadratic_diagonal"
        return cls(kind, n, ev, hess, tuple(cs))

    @classmethod
    def custom(cls, f: ScalarField, n: int, hessian: Optional[HessianField] = None) -> "WeightFunction":
        return cls("custom", n, f, hessian)

    def plus(self, u: "TestFunction", scale: float = 1.0) -> "WeightFunction":
        """The weight ``phi + scale * u``."""
        if u.dimension != self.dimension:
            raise ValueError("dimension mismatch between weight and test function")
        phi = self
        s = float(scale)

        def ev(z):
            return phi(z) + s * u(z)

        def hess(z):
            return phi.hessian(z) + s * u.hessian(z)

        return WeightFunction("sum", self.dimension, ev, hess, (self, u, s))


def _bump_profile(s, rho2):
    """Radial factor exp(1 - 1/q) with q = 1 - s/rho^2 and its first two s-derivatives."""
    q = 1.0 - s / rho2
    inside = q > 0
    qs = np.where(inside, q, 1.0)
    f = np.where(inside, np.exp(1.0 - 1.0 / qs), 0.0)
    g1 = -1.0 / (rho2 * qs**2)
    g2 = -2.0 / (rho2**2 * qs**3)
    f1 = np.where(inside, f * g1, 0.0)
    f2 = np.where(inside, f * (g1 * g1 + g2), 0.0)
    return f, f1, f2


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported real test function ``u``.

    ``support`` is a ball whose closure must sit inside the domain; ``None``
    stands for the zero function (empty support).
    """

    __test__ = False

    kind: str
    dimension: int
    evaluate: ScalarField
    hessian_fn: Optional[HessianField]
    support: Optional[Ball]
    params: tuple = ()

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.evaluate(_as_points(z, self.dimension)), dtype=float)

    def hessian(self, z) -> np.ndarray:
        pts = _as_points(z, self.dimension)
        if self.hessian_fn is None:
            return complex_hessian_fd(self.evaluate, pts)
        return self.hessian_fn(pts)

    @property
    def is_zero(self) -> bool:
        return self.support is None

    @classmethod
    def zero(cls, n: int = 1) -> "TestFunction":
        return cls("zero", n, lambda z: np.zeros(z.shape[0]),
                   lambda z: np.zeros((z.shape[0], n, n), dtype=complex), None)

    @classmethod
    def bump(cls, center, radius: float, amplitude: float) -> "TestFunction":
        """``a * exp(1 - 1/(1 - |z - z0|^2 / rho^2))`` inside the ball, zero outside."""
        c = np.atleast_1d(np.asarray(center, dtype=complex))
        n = c.shape[0]
        rho2 = float(radius) ** 2
        a = float(amplitude)
        if a == 0.0:
            return cls.zero(n)

        def ev(z):
            s = np.sum(np.abs(z - c) ** 2, axis=1)
            return a * _bump_profile(s, rho2)[0]

        def hess(z):
            w = z - c
            s = np.sum(np.abs(w) ** 2, axis=1)
            _, f1, f2 = _bump_profile(s, rho2)
            # d_j dbar_k f(s) = f'(s) delta_jk + f''(s) conj(w_j) w_k
            h = (f2[:, None, None] * np.conj(w)[:, :, None] * w[:, None, :]
                 + f1[:, None, None] * np.eye(n)[None, :, :])
            return a * h

        return cls("bump", n, ev, hess, Ball(tuple(c), radius), (tuple(c), float(radius), a))

    @classmethod
    def bump_with_hessian_norm(cls, center, radius: float, norm: float) -> "TestFunction":
        """Bump whose complex Hessian has spectral sup-norm ``norm`` (amplitude calibrated numerically)."""
        n = np.atleast_1d(np.asarray(center)).shape[0]
        return cls.bump(center, radius, norm / bump_hessian_sup(radius, n))

    @classmethod
    def custom(cls, f: ScalarField, support: Ball, hessian: Optional[HessianField] = None) -> "TestFunction":
        return cls("custom", support.dimension, f, hessian, support)

    def scaled(self, c: float) -> "TestFunction":
        if self.is_zero or c == 0.0:
            return TestFunction.zero(self.dimension)
        base = self
        c = float(c)
        return TestFunction("scaled", self.dimension, lambda z: c * base(z),
                            lambda z: c * base.hessian(z), self.support, (base, c))


def bump_hessian_sup(radius: float, n: int = 1, samples: int = 20001) -> float:
    """Sup over z of the spectral norm of the complex Hessian of the unit-amplitude bump."""
    rho2 = float(radius) ** 2
    s = np.linspace(0.0, rho2, samples, endpoint=False)
    _, f1, f2 = _bump_profile(s, rho2)
    # eigenvalues: f' (multiplicity n-1) and f' + s f''
    eig = np.abs(f1 + s * f2)
    if n > 1:
        eig = np.maximum(eig, np.abs(f1))
    return float(eig.max())


def lambda_min(hess: np.ndarray) -> np.ndarray:
    if hess.shape[-1] == 1:
        return hess[..., 0, 0].real
    return np.linalg.eigvalsh(hess)[..., 0]


@dataclass(frozen=True)
class AdmissibilityReport:
    lambda_min_t0: float
    lambda_min_t1: float

    @property
    def admissible(self) -> bool:
        return self.lambda_min_t0 > 0 and self.lambda_min_t1 > 0


def check_admissible(phi: WeightFunction, u: TestFunction, grid: QuadratureGrid) -> AdmissibilityReport:
    """Scan ``lambda_min(ddbar phi)`` and ``lambda_min(ddbar(phi + u))`` over the grid nodes.

    ``t -> lambda_min(A + tB)`` is concave, so positivity at t = 0 and t = 1
    certifies every ``phi + t u`` with ``t`` in [0, 1].
    """
    if u.support is not None and not grid.domain.ball_inside(u.support):
        raise AdmissibilityError(f"support {u.support} of the test function is not compactly inside the domain")
    h_phi = phi.hessian(grid.nodes)
    lam0 = float(lambda_min(h_phi).min())
    if u.is_zero:
        return AdmissibilityReport(lam0, lam0)
    lam1 = float(lambda_min(h_phi + u.hessian(grid.nodes)).min())
    return AdmissibilityReport(lam0, lam1)
