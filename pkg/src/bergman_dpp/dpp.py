"""Projection DPP sampling for truncated Bergman kernels and Monte Carlo checks.

Each sample draws from its own counter-based Philox stream keyed by
``(master seed, sample index)``, so results do not depend on how samples are
distributed over worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bergman import TruncatedBasis
from .geometry import Ball, DomainSpec, QuadratureGrid, build_quadrature, gauss_legendre
from .weights import TestFunction

ENVELOPE_SAFETY = 1.5
MIN_ACCEPT_RATE = 1e-4
MIN_TRIES_FOR_RATE = 50_000


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PointConfiguration:
    points: np.ndarray
    k: float
    seed: int
    index: int

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int


def sample_rng(seed: int, index: int) -> np.random.Generator:
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (int(index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _complement_frame(frame: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Orthonormal frame of ``{f in span(frame) : f(x) = 0}`` given ``a = frame @ e(x)``.

    A Householder reflector sends ``conj(a)/|a|`` to a multiple of the first
    unit vector; its remaining columns span the complement.
    """
    x = np.conj(a) / np.linalg.norm(a)
    alpha = -np.exp(1j * np.angle(x[0])) if x[0] != 0 else -1.0
    v = x.copy()
    v[0] -= alpha
    h = np.eye(a.shape[0], dtype=complex) - 2.0 * np.outer(v, np.conj(v)) / np.vdot(v, v).real
    return h[:, 1:].T @ frame


class ProjectionSampler:
    """Sequential sampler for the rank-N projection DPP of a truncated basis.

    The next point is drawn from ``||F e(z)||^2 e^{-k phi(z)} / m`` (``F`` the
    current orthonormal frame of rank ``m``) by rejection from the uniform law
    on the bounding box. Since that density never exceeds ``rho_k(z) / m``, the
    envelope is ``safety * max_grid(rho_k) / m``; a proposal above the envelope
    aborts the run.
    """

    def __init__(self, basis: TruncatedBasis, grid: Optional[QuadratureGrid] = None,
                 safety: float = ENVELOPE_SAFETY):
        self.basis = basis
        self.grid = grid or basis.grid
        self.domain: DomainSpec = self.grid.domain
        e = basis.grid_values if self.grid is basis.grid else basis.weighted_values(self.grid.nodes)
        self.rho_max = float(np.max(np.sum(np.abs(e) ** 2, axis=1)))
        self.bound = safety * self.rho_max
        box = self.domain.bounding_box()
        self.lo = np.array([[b[0], b[2]] for b in box]).ravel()
        self.hi = np.array([[b[1], b[3]] for b in box]).ravel()
        self.box_volume = self.domain.bounding_box_volume

    def _propose(self, rng, size):
        x = rng.uniform(self.lo, self.hi, size=(size, self.lo.shape[0]))
        return x[:, 0::2] + 1j * x[:, 1::2]

    def sample_points(self, rng: np.random.Generator) -> np.ndarray:
        n_d = self.basis.dim
        frame = np.eye(n_d, dtype=complex)
        points = np.empty((n_d, self.domain.dimension), dtype=complex)
        tries = accepts = 0
        for step in range(n_d):
            m = n_d - step
            env = self.bound / m
            batch = int(min(4096, max(16, math.ceil(1.2 * env * self.box_volume))))
            while True:
                z = self._propose(rng, batch)
                coin = rng.uniform(size=batch)
                inside = self.domain.contains(z)
                p = np.zeros(batch)
                if inside.any():
                    f = self.basis.weighted_values(z[inside]) @ frame.T
                    p[inside] = np.sum(np.abs(f) ** 2, axis=1) / m
                if np.any(p > env):
                    i = int(np.argmax(p > env))
                    raise SamplerError(f"envelope violated at {z[i]}: density {p[i]:.6g} > {env:.6g}; "
                                       "raise the envelope safety factor")
                hit = np.flatnonzero(coin * env < p)
                if hit.size:
                    i = int(hit[0])
                    tries += i + 1
                    accepts += 1
                    break
                tries += batch
                if tries >= MIN_TRIES_FOR_RATE and accepts / tries < MIN_ACCEPT_RATE:
                    raise SamplerError(f"rejection acceptance rate {accepts / tries:.2e} below {MIN_ACCEPT_RATE}")
            x = z[i]
            points[step] = x
            if m == 1:
                break
            a = frame @ self.basis.weighted_values(x[None, :])[0]
            frame = _complement_frame(frame, a)
        return points


def sample_dpp(basis: TruncatedBasis, seed: int, index: int = 0,
               sampler: Optional[ProjectionSampler] = None) -> PointConfiguration:
    sampler = sampler or ProjectionSampler(basis)
    pts = sampler.sample_points(sample_rng(seed, index))
    return PointConfiguration(pts, basis.k, int(seed), int(index))


def sample_many(basis: TruncatedBasis, n_samples: int, seed: int, threads: int = 1,
                sampler: Optional[ProjectionSampler] = None) -> list[PointConfiguration]:
    sampler = sampler or ProjectionSampler(basis)
    if threads <= 1:
        return [sample_dpp(basis, seed, i, sampler) for i in range(n_samples)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: sample_dpp(basis, seed, i, sampler), range(n_samples)))


def linear_statistic(samples: Sequence[PointConfiguration], u: TestFunction) -> np.ndarray:
    """``<u, Lambda> = sum_i u(lambda_i)`` per sample."""
    return np.array([float(np.sum(u(s.points))) for s in samples])


def estimate_laplace_functional(basis: TruncatedBasis, u: TestFunction, s: float, n_samples: int,
                                seed: int, threads: int = 1,
                                samples: Optional[Sequence[PointConfiguration]] = None) -> McEstimate:
    """Monte Carlo estimate of ``E[exp(-s <u, Lambda>)]``."""
    if n_samples < 100:
        raise ValueError("estimate_laplace_functional needs n_samples >= 100")
    if u.is_zero or s == 0.0:
        return McEstimate(1.0, 0.0, n_samples, seed)
    if samples is None:
        samples = sample_many(basis, n_samples, seed, threads)
    vals = np.exp(-s * linear_statistic(samples[:n_samples], u))
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples)), n_samples, seed)


@dataclass(frozen=True)
class PolarBins:
    """Annular-sector bins ``[r_i, r_{i+1}) x [theta_j, theta_{j+1})`` about ``center`` (n = 1)."""

    center: complex
    r_edges: np.ndarray
    theta_edges: np.ndarray

    @classmethod
    def equal_area(cls, radius: float, n_r: int, n_theta: int, center: complex = 0.0) -> "PolarBins":
        r = radius * np.sqrt(np.linspace(0.0, 1.0, n_r + 1))
        return cls(complex(center), r, np.linspace(0.0, 2.0 * np.pi, n_theta + 1))

    @property
    def shape(self):
        return (len(self.r_edges) - 1, len(self.theta_edges) - 1)

    @property
    def areas(self) -> np.ndarray:
        ring = 0.5 * np.diff(self.r_edges**2)
        return (ring[:, None] * np.diff(self.theta_edges)[None, :]).ravel()

    def assign(self, z: np.ndarray) -> np.ndarray:
        w = np.asarray(z).ravel() - self.center
        r, th = np.abs(w), np.mod(np.angle(w), 2.0 * np.pi)
        i = np.searchsorted(self.r_edges, r, side="right") - 1
        j = np.searchsorted(self.theta_edges, th, side="right") - 1
        nr, nt = self.shape
        ok = (i >= 0) & (i < nr) & (j >= 0) & (j < nt)
        return np.where(ok, i * nt + j, -1)

    def quadrature(self, order: int = 16):
        """Per-bin tensor Gauss-Legendre nodes/weights in polar coordinates."""
        out = []
        for r0, r1 in zip(self.r_edges[:-1], self.r_edges[1:]):
            r, wr = gauss_legendre(order, r0, r1)
            for t0, t1 in zip(self.theta_edges[:-1], self.theta_edges[1:]):
                t, wt = gauss_legendre(order, t0, t1)
                z = self.center + (r[:, None] * np.exp(1j * t)[None, :]).ravel()
                out.append((z[:, None], ((wr * r)[:, None] * wt[None, :]).ravel()))
        return out


@dataclass(frozen=True)
class BinnedIntensity:
    counts: np.ndarray
    areas: np.ndarray
    n_samples: int

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_samples * self.areas)

    @property
    def integral(self) -> float:
        return float(np.sum(self.density * self.areas))


def empirical_intensity(samples: Sequence[PointConfiguration], bins: PolarBins,
                        min_samples: int = 1000) -> BinnedIntensity:
    if len(samples) < min_samples:
        raise ValueError(f"empirical_intensity needs >= {min_samples} samples, got {len(samples)}")
    pts = np.concatenate([s.points[:, 0] for s in samples])
    idx = bins.assign(pts)
    counts = np.bincount(idx[idx >= 0], minlength=bins.areas.shape[0]).astype(float)
    return BinnedIntensity(counts, bins.areas, len(samples))


def expected_bin_mass(basis: TruncatedBasis, bins: PolarBins, order: int = 16) -> np.ndarray:
    """``int_bin rho_k dlambda`` for every bin, i.e. the expected count per sample."""
    return np.array([float(np.sum(w * basis.density(z))) for z, w in bins.quadrature(order)])


def two_point_diagnostic(samples: Sequence[PointConfiguration], basis: TruncatedBasis,
                         a: Ball, b: Ball, resolution=(24, 48)):
    """Empirical ``E[Lambda(A) Lambda(B)]`` with its standard error against
    ``int_{A x B} rho(z) rho(w) - |K(z, w)|^2 e^{-k phi(z) - k phi(w)}``.
    """
    counts = []
    for ball in (a, b):
        counts.append(np.array([np.count_nonzero(ball.contains(s.points, closed=False)) for s in samples]))
    prod = counts[0] * counts[1]
    emp = float(prod.mean())
    err = float(prod.std(ddof=1) / math.sqrt(len(samples)))
    ga = build_quadrature(DomainSpec.disk(a.radius, a.center[0]), resolution)
    gb = build_quadrature(DomainSpec.disk(b.radius, b.center[0]), resolution)
    ea = basis.weighted_values(ga.nodes)
    eb = basis.weighted_values(gb.nodes)
    ma = float(np.sum(ga.weights * np.sum(np.abs(ea) ** 2, axis=1)))
    mb = float(np.sum(gb.weights * np.sum(np.abs(eb) ** 2, axis=1)))
    cross = np.sqrt(ga.weights)[:, None] * (ea @ np.conj(eb).T) * np.sqrt(gb.weights)[None, :]
    pred = ma * mb - float(np.sum(np.abs(cross) ** 2))
    return emp, err, pred


def export_samples_csv(samples: Sequence[PointConfiguration], dest) -> None:
    """One row per point: ``sample_id, re_z1, im_z1, ...``. ``dest`` is a path or a text stream."""
    if hasattr(dest, "write"):
        _write_samples(samples, dest)
        return
    with open(dest, "w", newline="") as fh:
        _write_samples(samples, fh)


def _write_samples(samples, fh) -> None:
    n = samples[0].points.shape[1] if samples else 1
    header = ["sample_id"] + [f"{p}_z{j + 1}" for j in range(n) for p in ("re", "im")]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for s in samples:
        for pt in s.points:
            row = [s.index]
            for c in pt:
                row += [format(c.real, ".17g"), format(c.imag, ".17g")]
            w.writerow(row)
