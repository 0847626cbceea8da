"""Bounded domains in C^n and tensor quadrature rules for Lebesgue measure.

Points are stored as complex arrays of shape ``(m, n)``. Three domain kinds are
supported: a disk in C, a bidisk in C^2 and a box (a product of rectangles, one
per complex coordinate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

MIN_RESOLUTION = 8

Field = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    """Open ball ``{z : |z - center| < radius}`` in C^n."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(complex(c) for c in self.center))

    @property
    def dimension(self) -> int:
        return len(self.center)

    def contains(self, points: np.ndarray, closed: bool = True) -> np.ndarray:
        d2 = np.sum(np.abs(np.asarray(points) - np.asarray(self.center)) ** 2, axis=-1)
        return d2 <= self.radius**2 if closed else d2 < self.radius**2


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dimension: int
    radii: tuple = ()
    centers: tuple = ()
    # box: one (re_lo, re_hi, im_lo, im_hi) tuple per complex coordinate
    intervals: tuple = ()

    def __post_init__(self):
        if self.kind in ("disk", "bidisk"):
            if any(not r > 0 for r in self.radii):
                raise ValueError(f"radii must be positive, got {self.radii}")
            if len(self.radii) != self.dimension or len(self.centers) != self.dimension:
                raise ValueError("one radius and one center per complex coordinate")
        elif self.kind == "box":
            if len(self.intervals) != self.dimension:
                raise ValueError("one rectangle per complex coordinate")
            for lo_re, hi_re, lo_im, hi_im in self.intervals:
                if not (hi_re > lo_re and hi_im > lo_im):
                    raise ValueError(f"degenerate box interval {self.intervals}")
        else:
            raise ValueError(f"unsupported domain kind {self.kind!r}")
        if self.dimension not in (1, 2):
            raise ValueError("only n = 1 or n = 2 is supported")

    @classmethod
    def disk(cls, radius: float = 1.0, center: complex = 0.0) -> "DomainSpec":
        return cls("disk", 1, radii=(float(radius),), centers=(complex(center),))

    @classmethod
    def bidisk(cls, r1: float = 1.0, r2: float = 1.0, center=(0.0, 0.0)) -> "DomainSpec":
        return cls("bidisk", 2, radii=(float(r1), float(r2)),
                   centers=tuple(complex(c) for c in center))

    @classmethod
    def box(cls, intervals: Sequence[Sequence[float]]) -> "DomainSpec":
        """``intervals`` holds ``(a1, b1, a2, b2)`` per coordinate: Re in [a1,b1], Im in [a2,b2]."""
        ivs = tuple(tuple(float(x) for x in iv) for iv in intervals)
        return cls("box", len(ivs), intervals=ivs)

    @property
    def center(self) -> np.ndarray:
        if self.kind == "box":
            return np.array([complex(0.5 * (a + b), 0.5 * (c + d)) for a, b, c, d in self.intervals])
        return np.array(self.centers, dtype=complex)

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return math.prod((b - a) * (d - c) for a, b, c, d in self.intervals)
        return math.prod(math.pi * r * r for r in self.radii)

    def bounding_box(self) -> list[tuple[float, float, float, float]]:
        if self.kind == "box":
            return list(self.intervals)
        return [(c.real - r, c.real + r, c.imag - r, c.imag + r)
                for c, r in zip(self.centers, self.radii)]

    @property
    def bounding_box_volume(self) -> float:
        return math.prod((b - a) * (d - c) for a, b, c, d in self.bounding_box())

    @property
    def max_radius(self) -> float:
        """Largest distance from the expansion center to a point of the closure."""
        if self.kind == "box":
            return max(math.hypot(0.5 * (b - a), 0.5 * (d - c)) for a, b, c, d in self.intervals)
        return max(self.radii)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        inside = np.ones(pts.shape[0], dtype=bool)
        if self.kind == "box":
            for j, (a, b, c, d) in enumerate(self.intervals):
                x, y = pts[:, j].real, pts[:, j].imag
                inside &= (x >= a) & (x <= b) & (y >= c) & (y <= d)
        else:
            for j, (c, r) in enumerate(zip(self.centers, self.radii)):
                inside &= np.abs(pts[:, j] - c) <= r
        return inside

    def ball_inside(self, ball: Ball) -> bool:
        """True when the closed ball sits at positive distance from the boundary."""
        if ball.dimension != self.dimension:
            return False
        if self.kind == "box":
            for (a, b, c, d), z0 in zip(self.intervals, ball.center):
                if not (a < z0.real - ball.radius and z0.real + ball.radius < b
                        and c < z0.imag - ball.radius and z0.imag + ball.radius < d):
                    return False
            return True
        return all(abs(z0 - c) + ball.radius < r
                   for z0, c, r in zip(ball.center, self.centers, self.radii))

    def to_dict(self) -> dict:
        if self.kind == "disk":
            c = self.centers[0]
            return {"kind": "disk", "radius": self.radii[0], "center": [c.real, c.imag]}
        if self.kind == "bidisk":
            return {"kind": "bidisk", "radii": list(self.radii),
                    "center": [[c.real, c.imag] for c in self.centers]}
        return {"kind": "box", "intervals": [list(iv) for iv in self.intervals]}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        kind = d.get("kind")
        if kind == "disk":
            c = d.get("center", [0.0, 0.0])
            return cls.disk(d.get("radius", 1.0), complex(c[0], c[1]))
        if kind == "bidisk":
            r1, r2 = d.get("radii", [1.0, 1.0])
            cs = d.get("center", [[0.0, 0.0], [0.0, 0.0]])
            return cls.bidisk(r1, r2, [complex(a, b) for a, b in cs])
        if kind == "box":
            return cls.box(d["intervals"])
        raise ValueError(f"unsupported domain kind {kind!r}")


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    domain: DomainSpec
    resolution: tuple = field(default=())

    def __post_init__(self):
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]


def gauss_legendre(m: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def polar_rule(radius: float, n_r: int, n_theta: int, center: complex = 0.0):
    """Gauss-Legendre in the radius (with the Jacobian r) times the trapezoid rule in angle."""
    r, wr = gauss_legendre(n_r, 0.0, radius)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    nodes = center + (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = ((wr * r)[:, None] * np.full(n_theta, 2.0 * np.pi / n_theta)[None, :]).ravel()
    return nodes, weights


def _rect_rule(a, b, c, d, nx, ny):
    x, wx = gauss_legendre(nx, a, b)
    y, wy = gauss_legendre(ny, c, d)
    nodes = (x[:, None] + 1j * y[None, :]).ravel()
    weights = (wx[:, None] * wy[None, :]).ravel()
    return nodes, weights


def _tensor(rules):
    nodes, weights = rules[0]
    nodes = nodes[:, None]
    for n2, w2 in rules[1:]:
        m1, m2 = nodes.shape[0], n2.shape[0]
        nodes = np.concatenate([np.repeat(nodes, m2, axis=0),
                                np.tile(n2, m1)[:, None]], axis=1)
        weights = np.outer(weights, w2).ravel()
    return np.ascontiguousarray(nodes), np.ascontiguousarray(weights)


def build_quadrature(spec: DomainSpec, resolution: Sequence[int]) -> QuadratureGrid:
    """Tensor rule on ``spec``.

    ``resolution`` lists node counts per real axis: ``(n_r, n_theta)`` for a disk
    and ``(n_x, n_y)`` for a rectangle, repeated per complex coordinate. For
    n = 2 a two-entry resolution is reused for both coordinates.
    """
    res = tuple(int(r) for r in resolution)
    if len(res) == 2 and spec.dimension == 2:
        res = res + res
    if len(res) != 2 * spec.dimension:
        raise QuadratureError(f"expected {2 * spec.dimension} resolution entries, got {res}")
    if min(res) < MIN_RESOLUTION:
        raise QuadratureError(f"resolution must be >= {MIN_RESOLUTION} per axis, got {res}")
    rules = []
    for j in range(spec.dimension):
        m1, m2 = res[2 * j], res[2 * j + 1]
        if spec.kind == "box":
            rules.append(_rect_rule(*spec.intervals[j], m1, m2))
        elif spec.kind in ("disk", "bidisk"):
            rules.append(polar_rule(spec.radii[j], m1, m2, spec.centers[j]))
        else:
            raise QuadratureError(f"unsupported domain kind {spec.kind!r}")
    nodes, weights = _tensor(rules)
    return QuadratureGrid(nodes, weights, spec, res)


def evaluate_field(grid: QuadratureGrid, f: Field) -> np.ndarray:
    values = f(grid.nodes) if callable(f) else np.asarray(f)
    values = np.broadcast_to(values, (grid.size,))
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise QuadratureError(f"non-finite integrand value {values[i]} at node {i}: {grid.nodes[i]}")
    return values


def integrate(grid: QuadratureGrid, f: Field) -> complex:
    """``sum_i w_i f(node_i)``; ``f`` is a callable on the node array or precomputed values."""
    values = evaluate_field(grid, f)
    # np.sum reduces contiguous arrays pairwise in a fixed order
    total = np.sum(grid.weights * values)
    return complex(total) if np.iscomplexobj(total) else float(total)
