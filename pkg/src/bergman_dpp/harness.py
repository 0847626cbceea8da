"""Convergence experiment, identity suite and report emission.

Configs are single JSON documents with ``"schema": 1``. Complex coordinates
are written as ``[re, im]`` pairs, one per complex dimension.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import bergman, dpp, operators
from .energy import default_t_grid, energy as compute_energy, energy_by_t_integral, energy_primitive_check
from .bergman import TruncatedBasis, build_basis, degree_for, truncation_tail_indicator
from .geometry import Ball, DomainSpec, QuadratureGrid, build_quadrature, integrate
from .operators import Symbol, log_fredholm_det, toeplitz_matrix
from .weights import (AdmissibilityError, TestFunction, WeightFunction, check_admissible,
                      complex_hessian_fd)

log = logging.getLogger(__name__)

SCHEMA = 1
TAIL_TOL = 1e-8
DERIV_TOL = 1e-4
REPORT_FIELDS = ("k", "D", "N_D", "lhs", "rhs", "gap", "tail_indicator", "deriv_residual", "valid")
SURROGATE_NOTE = ("gap contraction under k-doubling is an engineering surrogate for the k -> infinity "
                  "limit; no convergence rate is claimed")


class ConfigError(ValueError):
    pass


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex values are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class DegreeRule:
    c_d: float = 3.0
    offset: int = 10
    overrides: dict = field(default_factory=dict)

    def degree(self, k: float, r_max: float) -> int:
        for key, d in self.overrides.items():
            if float(key) == float(k):
                return int(d)
        return degree_for(k, r_max, self.c_d, self.offset)


@dataclass(frozen=True)
class McConfig:
    enabled: bool = True
    n_samples: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    path: Optional[str] = None
    format: str = "csv"


@dataclass(frozen=True)
class SampleConfig:
    k: float = 3.0
    degree: Optional[int] = None
    n_samples: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec = field(default_factory=DomainSpec.disk)
    weight: dict = field(default_factory=lambda: {"kind": "quadratic", "c": 1.0})
    test_function: dict = field(default_factory=lambda: {
        "kind": "bump", "center": [[0.0, 0.0]], "radius": 0.5, "hessian_norm": 0.5})
    k_schedule: tuple = (4.0, 8.0, 16.0, 32.0)
    degree_rule: DegreeRule = field(default_factory=DegreeRule)
    # "auto": per axis max(base_resolution, 2D+2)
    resolution: object = "auto"
    base_resolution: int = 64
    energy_resolution: tuple = (256, 256)
    mc: McConfig = field(default_factory=McConfig)
    t_nodes: int = 16
    deriv_points: int = 5
    deriv_step: float = 1e-4
    output: OutputConfig = field(default_factory=OutputConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    schema: int = SCHEMA

    def __post_init__(self):
        ks = [float(k) for k in self.k_schedule]
        if not ks or any(k <= 0 for k in ks):
            raise ConfigError("k_schedule must list positive reals")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"k_schedule must be strictly increasing, got {ks}")
        if self.output.format not in ("csv", "json"):
            raise ConfigError(f"output format must be csv or json, got {self.output.format!r}")
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema}")
        if self.resolution != "auto":
            if min(int(r) for r in self.resolution) < 8:
                raise ConfigError("resolution must be >= 8 per axis")

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def make_weight(self) -> WeightFunction:
        return make_weight(self.weight, self.dimension)

    def make_test_function(self) -> TestFunction:
        return make_test_function(self.test_function, self.dimension)

    def degree(self, k: float) -> int:
        return self.degree_rule.degree(k, self.domain.max_radius)

    def resolution_for(self, degree: int) -> tuple:
        if self.resolution == "auto":
            need = max(self.base_resolution, 2 * degree + 2)
            return (need,) * (2 * self.dimension)
        return tuple(int(r) for r in self.resolution)

    def grid_for(self, degree: int) -> QuadratureGrid:
        return build_quadrature(self.domain, self.resolution_for(degree))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        if "schema" in d:
            kw["schema"] = int(d.pop("schema"))
        if "domain" in d:
            kw["domain"] = DomainSpec.from_dict(d.pop("domain"))
        for key in ("weight", "test_function"):
            if key in d:
                kw[key] = dict(d.pop(key))
        if "k_schedule" in d:
            kw["k_schedule"] = tuple(float(k) for k in d.pop("k_schedule"))
        if "degree_rule" in d:
            r = dict(d.pop("degree_rule"))
            kw["degree_rule"] = DegreeRule(float(r.get("c_D", 3.0)), int(r.get("offset", 10)),
                                           {str(k): int(v) for k, v in r.get("overrides", {}).items()})
        if "resolution" in d:
            r = d.pop("resolution")
            kw["resolution"] = r if r == "auto" else tuple(int(x) for x in r)
        if "base_resolution" in d:
            kw["base_resolution"] = int(d.pop("base_resolution"))
        if "energy_resolution" in d:
            kw["energy_resolution"] = tuple(int(x) for x in d.pop("energy_resolution"))
        if "mc" in d:
            m = dict(d.pop("mc"))
            kw["mc"] = McConfig(bool(m.get("enabled", True)), int(m.get("n_samples", 2000)), int(m.get("seed", 0)))
        for key, conv in (("t_nodes", int), ("deriv_points", int), ("deriv_step", float)):
            if key in d:
                kw[key] = conv(d.pop(key))
        if "output" in d:
            o = dict(d.pop("output"))
            kw["output"] = OutputConfig(o.get("path"), o.get("format", "csv"))
        if "sample" in d:
            s = dict(d.pop("sample"))
            deg = s.get("degree")
            kw["sample"] = SampleConfig(float(s.get("k", 3.0)), None if deg is None else int(deg),
                                        int(s.get("n_samples", 100)))
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "domain": self.domain.to_dict(),
            "weight": dict(self.weight),
            "test_function": dict(self.test_function),
            "k_schedule": list(self.k_schedule),
            "degree_rule": {"c_D": self.degree_rule.c_d, "offset": self.degree_rule.offset,
                            "overrides": dict(self.degree_rule.overrides)},
            "resolution": self.resolution if self.resolution == "auto" else list(self.resolution),
            "base_resolution": self.base_resolution,
            "energy_resolution": list(self.energy_resolution),
            "mc": {"enabled": self.mc.enabled, "n_samples": self.mc.n_samples, "seed": self.mc.seed},
            "t_nodes": self.t_nodes,
            "deriv_points": self.deriv_points,
            "deriv_step": self.deriv_step,
            "output": {"path": self.output.path, "format": self.output.format},
            "sample": {"k": self.sample.k, "degree": self.sample.degree, "n_samples": self.sample.n_samples},
        }


def make_weight(spec: dict, n: int) -> WeightFunction:
    kind = spec.get("kind", "quadratic")
    if kind == "quadratic":
        return WeightFunction.quadratic(float(spec.get("c", 1.0)), n)
    if kind == "quadratic_diagonal":
        cs = [float(c) for c in spec["coeffs"]]
        if len(cs) != n:
            raise ConfigError(f"quadratic_diagonal needs {n} coefficients")
        return WeightFunction.quadratic_diagonal(cs)
    raise ConfigError(f"unknown weight preset {kind!r}")


def make_test_function(spec: dict, n: int) -> TestFunction:
    kind = spec.get("kind", "bump")
    if kind == "zero":
        return TestFunction.zero(n)
    if kind == "bump":
        center = spec.get("center", [[0.0, 0.0]] * n)
        c = [_complex(v) for v in center]
        if len(c) != n:
            raise ConfigError(f"bump center needs {n} complex coordinates")
        radius = float(spec["radius"])
        if "hessian_norm" in spec:
            return TestFunction.bump_with_hessian_norm(c, radius, float(spec["hessian_norm"]))
        return TestFunction.bump(c, radius, float(spec["amplitude"]))
    raise ConfigError(f"unknown test-function preset {kind!r}")


# ---------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceRow:
    k: float
    D: int
    N_D: int
    lhs: float
    rhs: float
    gap: float
    tail_indicator: float
    deriv_residual: float
    valid: bool

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in REPORT_FIELDS}


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple = ()
    energy: float = 0.0
    # the same energy by Gauss-Legendre in t over the derivative formula
    energy_t_integral: float = 0.0
    notes: tuple = (SURROGATE_NOTE,)

    @property
    def all_valid(self) -> bool:
        return all(r.valid for r in self.rows)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.rows])


def scaled_log_det(basis: TruncatedBasis, grid: QuadratureGrid, u: TestFunction, t: float = 1.0) -> float:
    """``(1/k^{n+1}) log det[I + M(e^{-k t u} - 1)]``."""
    if u.is_zero or t == 0.0:
        return 0.0
    m = toeplitz_matrix(basis, grid, Symbol.exp_minus_one(u, basis.k * t))
    return log_fredholm_det(m) / basis.k ** (basis.dimension + 1)


def derivative_identity_residual(basis: TruncatedBasis, grid: QuadratureGrid, phi: WeightFunction,
                                 u: TestFunction, t_grid: Sequence[float], h: float = 1e-4) -> float:
    """``max_t |d/dt lhs(t) - int (rho_{k(phi+tu)}/k^n)(-u) dlambda| / (1 + |value|)``.

    The t-derivative is a central difference; the right side uses a basis built
    from its own Gram matrix at the weight ``phi + t u``.
    """
    if u.is_zero:
        return 0.0
    k, n = basis.k, basis.dimension
    uv = u(grid.nodes)
    mask = uv != 0.0
    worst = 0.0
    for t in t_grid:
        fd = (scaled_log_det(basis, grid, u, t + h) - scaled_log_det(basis, grid, u, t - h)) / (2.0 * h)
        bt = build_basis(grid, k, phi.plus(u, t), basis.degree, check=False)
        rho = bt.density(grid.nodes[mask]) / k**n
        value = float(np.sum(grid.weights[mask] * rho * -uv[mask]))
        worst = max(worst, abs(fd - value) / (1.0 + abs(value)))
    return worst


def _convergence_row(config: ExperimentConfig, k: float, phi: WeightFunction, u: TestFunction,
                     rhs: float) -> ConvergenceRow:
    degree = config.degree(k)
    grid = config.grid_for(degree)
    basis = build_basis(grid, k, phi, degree)
    lhs = scaled_log_det(basis, grid, u)
    # certified on supp u; the empty support of u = 0 certifies nothing and scores 0
    region = np.zeros(grid.size, dtype=bool) if u.is_zero else u.support
    tail = truncation_tail_indicator(basis, grid, region=region)
    if u.is_zero:
        deriv = 0.0
    else:
        t_grid = default_t_grid(config.deriv_points)
        deriv = derivative_identity_residual(basis, grid, phi, u, t_grid, config.deriv_step)
    values = (lhs, rhs, tail, deriv)
    valid = all(math.isfinite(v) for v in values) and tail <= TAIL_TOL and deriv <= DERIV_TOL
    if not valid:
        log.warning("row k=%g D=%d flagged invalid: tail=%.3e deriv=%.3e", k, degree, tail, deriv)
    return ConvergenceRow(float(k), degree, basis.dim, lhs, rhs, lhs - rhs, tail, deriv, valid)


def run_convergence_experiment(config: ExperimentConfig, threads: int = 1) -> ConvergenceReport:
    """Rows ``(k, D, N_D, lhs_k, -E(phi+u), gap, tail, deriv)`` over ``config.k_schedule``.

    Aborts with ``AdmissibilityError`` if ``u`` is not admissible. Rows whose
    tail indicator on ``supp u`` exceeds 1e-8, or whose derivative identity
    fails, are flagged invalid. Rows are assembled in schedule order; BLAS runs
    single-threaded so the numbers do not depend on ``threads``.
    """
    phi = config.make_weight()
    u = config.make_test_function()
    with threadpool_limits(limits=1):
        if u.is_zero:
            e = e_t = 0.0
        else:
            egrid = build_quadrature(config.domain, config.energy_resolution)
            e = compute_energy(phi, u, egrid, with_check=False).energy
            e_t = energy_by_t_integral(phi, u, egrid, config.t_nodes)
        rhs = 0.0 - e

        def run(k):
            return _convergence_row(config, k, phi, u, rhs)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(run, config.k_schedule))
        else:
            rows = [run(k) for k in config.k_schedule]
    return ConvergenceReport(tuple(rows), e, e_t)


# ----------------------------------------------------------------- emission


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return format(x, ".17g")


def _json_num(v) -> str:
    s = _fmt(v)
    return "null" if s in ("nan", "inf", "-inf") else s


def report_to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for row in report.rows:
        w.writerow([_fmt(row.as_dict()[f]) for f in REPORT_FIELDS])
    return buf.getvalue()


def report_to_json(report: ConvergenceReport) -> str:
    rows = []
    for row in report.rows:
        d = row.as_dict()
        rows.append("    {" + ", ".join(f'"{f}": {_json_num(d[f])}' for f in REPORT_FIELDS) + "}")
    body = ",\n".join(rows)
    notes = json.dumps(list(report.notes))
    head = (f'{{\n  "energy": {_json_num(report.energy)},\n'
            f'  "energy_t_integral": {_json_num(report.energy_t_integral)},\n  "notes": {notes},\n')
    return head + (f'  "rows": [\n{body}\n  ]\n}}\n' if rows else '  "rows": []\n}\n')


def emit_report(report: ConvergenceReport, path=None, format: str = "csv") -> str:
    """Write the report as CSV or JSON; returns the text. ``path=None`` skips writing."""
    if format == "csv":
        text = report_to_csv(report)
    elif format == "json":
        text = report_to_json(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text


def load_report(text: str, format: str = "csv") -> list[dict]:
    """Parse an emitted report back into row dicts."""
    if format == "json":
        return json.loads(text)["rows"]
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({"k": float(rec["k"]), "D": int(rec["D"]), "N_D": int(rec["N_D"]),
                     **{f: float(rec[f]) for f in ("lhs", "rhs", "gap", "tail_indicator", "deriv_residual")},
                     "valid": rec["valid"] == "true"})
    return rows


# ------------------------------------------------------------ identity suite


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # pass | fail | skipped | error
    residual: float = float("nan")
    tolerance: float = float("nan")
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "skipped")


@dataclass(frozen=True)
class IdentityReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def by_name(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("check", "status", "residual", "tolerance", "detail"))
        for c in self.checks:
            w.writerow((c.name, c.status, _fmt(c.residual), _fmt(c.tolerance), c.detail))
        return buf.getvalue()

    def to_json(self) -> str:
        items = []
        for c in self.checks:
            items.append("    {" + ", ".join([
                f'"check": {json.dumps(c.name)}', f'"status": {json.dumps(c.status)}',
                f'"residual": {_json_num(c.residual)}', f'"tolerance": {_json_num(c.tolerance)}',
                f'"detail": {json.dumps(c.detail)}']) + "}")
        return '{\n  "checks": [\n' + ",\n".join(items) + "\n  ]\n}\n"


class _Fixtures:
    """Small-scale objects shared by the checks, built lazily."""

    def __init__(self, config: ExperimentConfig, fault: Optional[str]):
        self.config = config
        self.fault = fault
        self.disk = DomainSpec.disk()
        self.phi = WeightFunction.quadratic()
        self._cache = {}

    def grid(self, res=(64, 128), domain=None):
        key = ("grid", res, domain)
        if key not in self._cache:
            self._cache[key] = build_quadrature(domain or self.disk, res)
        return self._cache[key]

    def basis(self, k, degree, res=(64, 128)):
        key = ("basis", k, degree, res)
        if key not in self._cache:
            self._cache[key] = build_basis(self.grid(res), k, self.phi, degree)
        return self._cache[key]

    def corrupted_basis(self, k, degree):
        b = self.basis(k, degree)
        chol = b.chol.copy()
        chol[-1, 0] += 1e-3
        return replace(b, chol=chol)

    @staticmethod
    def bump_corpus():
        return [TestFunction.bump([0.0], 0.5, 0.3),
                TestFunction.bump([0.2 + 0.1j], 0.4, 0.5),
                TestFunction.bump([-0.3j], 0.5, 0.2),
                TestFunction.bump([0.4], 0.3, 1.0),
                TestFunction.bump_with_hessian_norm([0.1 - 0.2j], 0.6, 0.5),
                TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.5)]


def _check(name: str, tol: float, fn: Callable[[], float], detail: str = "") -> CheckResult:
    try:
        res = float(fn())
    except Exception as exc:  # a failing precondition aborts only this check
        return CheckResult(name, "error", float("nan"), tol, f"{type(exc).__name__}: {exc}")
    status = "pass" if math.isfinite(res) and res <= tol else "fail"
    return CheckResult(name, status, res, tol, detail)


def _identity_checks(fx: _Fixtures):
    """(name, tolerance, callable, needs_mc) for the identity battery."""
    from scipy.special import gammainc, gamma

    disk, phi = fx.disk, fx.phi

    def closed_gram():
        worst = 0.0
        g = fx.grid((64, 128))
        for k in (1.0, 2.0, 4.0, 8.0):
            gm = bergman.gram_matrix(g, k, phi, 20).matrix
            a = np.arange(21)
            exact = math.pi * gammainc(a + 1, k) * gamma(a + 1) / k ** (a + 1)
            worst = max(worst, float(np.max(np.abs(gm.diagonal().real - exact) / exact)))
        return worst

    def gram_residual():
        b = fx.corrupted_basis(4.0, 20) if fx.fault == "gram" else fx.basis(4.0, 20)
        return b.gram_residual()

    def reproducing():
        b = fx.basis(4.0, 20)
        g = b.grid
        e = b.grid_values
        z = np.array([[0.1 + 0.2j], [-0.4j], [0.6]])
        kz = b.weighted_values(z) @ np.conj(e).T  # K(z, w) e^{-k phi(z)/2 - k phi(w)/2}
        rep = (kz * g.weights[None, :]) @ e
        return float(np.max(np.abs(rep - b.weighted_values(z))))

    def hermitian():
        b = fx.basis(4.0, 20)
        z = np.array([[0.1 + 0.2j], [-0.4j], [0.6]])
        kk = b.kernel(z, z)
        return float(np.max(np.abs(kk - np.conj(kk).T)) + max(0.0, -np.min(np.diag(kk).real)))

    def density_trace():
        b = fx.basis(4.0, 20)
        return abs(integrate(b.grid, b.density(b.grid.nodes)).real - b.dim) / b.dim

    def density_k8():
        b = fx.basis(8.0, 40, res=(96, 128))
        val = float(bergman.bergman_density(b, np.array([[0.0]]), scaled=True)[0])
        return abs(val - 1.0 / (math.pi * (1.0 - math.exp(-8.0))))

    def projection():
        return float(np.max(np.abs(operators.projection_spectrum(fx.basis(4.0, 20)) - 1.0)))

    def trace_identity():
        worst = 0.0
        for k, d in ((2.0, 12), (4.0, 20)):
            b = fx.basis(k, d)
            for u in fx.bump_corpus():
                t = operators.trace_toeplitz(toeplitz_matrix(b, b.grid, Symbol.plain(u, u.support)))
                r = operators.trace_formula_rhs(b, b.grid, u)
                worst = max(worst, abs(t - r) / abs(r))
        return worst

    def series():
        worst = 0.0
        res = (12, 16)
        u = TestFunction.bump([0.1], 0.6, 1.0)
        sym = Symbol.exp_minus_one(u)
        for d in (0, 1, 2):
            b = fx.basis(1.0, d, res=res)
            m = toeplitz_matrix(b, b.grid, sym)
            det = math.exp(log_fredholm_det(m))
            worst = max(worst, abs(det - operators.fredholm_series_oracle(b, b.grid, sym)))
        return worst

    def basis_independence():
        b = fx.basis(2.0, 12)
        u = TestFunction.bump_with_hessian_norm([0.1j], 0.5, 0.5)
        other = build_basis(b.grid, 2.0, phi.plus(u), 12)
        m = toeplitz_matrix(b, b.grid, Symbol.exp_minus_one(u, 2.0))
        return operators.basis_independence_residual(m, other)

    def symbol_positivity():
        b = fx.basis(4.0, 20)
        u = TestFunction.bump([0.2], 0.5, 0.8)
        lam = operators.smallest_eigenvalue(toeplitz_matrix(b, b.grid, Symbol.exp(u)))
        return max(0.0, math.exp(-0.8) - 1e-8 - lam)

    def jacobi():
        b = fx.basis(4.0, 20)
        u = TestFunction.bump([0.1], 0.8, 1.0)

        def path(t):
            return toeplitz_matrix(b, b.grid, Symbol.exp_minus_one(u, b.k * t))

        worst = 0.0
        for t0 in (0.25, 0.5, 0.75):
            fd, tr = operators.jacobi_fd_check(path, t0, 1e-4)
            worst = max(worst, abs(fd - tr) / (1.0 + abs(tr)))
        return worst

    def key_lemma():
        worst = 0.0
        for u in fx.bump_corpus()[4:]:
            b = fx.basis(4.0, 20)
            bu = build_basis(b.grid, 4.0, phi.plus(u), 20)
            worst = max(worst, operators.key_lemma_residual(b, bu, b.grid, u))
        return worst

    def energy_primitive():
        worst = 0.0
        g1 = fx.grid((96, 96))
        u1 = TestFunction.bump_with_hessian_norm([0.1], 0.5, 0.5)
        worst = max(worst, energy_primitive_check(phi, u1, g1))
        dom2 = DomainSpec.bidisk()
        g2 = fx.grid((24, 24), dom2)
        phi2 = WeightFunction.quadratic_diagonal([1.0, 2.0])
        u2 = TestFunction.bump_with_hessian_norm([0.1, -0.1j], 0.5, 0.5)
        worst = max(worst, energy_primitive_check(phi2, u2, g2))
        return worst

    def energy_t_integral():
        g = fx.grid((96, 96))
        u = TestFunction.bump_with_hessian_norm([0.1], 0.5, 0.5)
        e = compute_energy(phi, u, g, with_check=False).energy
        return abs(energy_by_t_integral(phi, u, g) - e) / abs(e)

    def energy_closed_form():
        g = fx.grid((96, 96))
        u = TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.5)
        e = compute_energy(phi, u, g, with_check=False).energy
        uv = u(g.nodes)
        lap = u.hessian(g.nodes)[:, 0, 0].real
        direct = float(np.sum(g.weights * uv * (2.0 + lap))) / (2.0 * math.pi)
        return abs(e - direct)

    def admissibility():
        g = fx.grid((64, 128))
        ok = check_admissible(phi, TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.5), g)
        unit = TestFunction.bump([0.0], 0.5, 1.0)
        dip = -float(unit.hessian(g.nodes)[:, 0, 0].real.min())
        # ddbar u attains -1.2 on the grid
        bad = check_admissible(phi, TestFunction.bump([0.0], 0.5, 1.2 / dip), g)
        return 0.0 if ok.admissible and ok.lambda_min_t1 >= 0.5 - 1e-9 and not bad.admissible else 1.0

    def hessian_fd():
        g = fx.grid((16, 16))
        phi2 = WeightFunction.quadratic_diagonal([1.0, 2.0])
        z2 = np.array([[0.1 + 0.2j, -0.3j], [0.5, 0.2 - 0.1j]])
        a = complex_hessian_fd(phi.evaluate, g.nodes) - phi.hessian(g.nodes)
        b = complex_hessian_fd(phi2.evaluate, z2) - phi2.hessian(z2)
        return float(max(np.max(np.abs(a)), np.max(np.abs(b))))

    mc = fx.config.mc

    def laplace():
        b = fx.basis(3.0, 12)
        u = TestFunction.bump_with_hessian_norm([0.0], 0.7, 0.9)
        est = dpp.estimate_laplace_functional(b, u, 1.0, mc.n_samples, mc.seed)
        det = math.exp(log_fredholm_det(toeplitz_matrix(b, b.grid, Symbol.exp_minus_one(u, 1.0))))
        return abs(est.mean - det) / est.stderr  # in units of stderr

    def intensity():
        b = fx.basis(2.0, 8)
        samples = dpp.sample_many(b, mc.n_samples, mc.seed + 1)
        if any(len(s) != b.dim for s in samples):
            return float("inf")
        bins = dpp.PolarBins.equal_area(1.0, 5, 4)
        emp = dpp.empirical_intensity(samples, bins, min_samples=min(1000, mc.n_samples))
        expected = dpp.expected_bin_mass(b, bins)
        counts = expected * mc.n_samples
        # studentized deviation per bin, worst case
        z = (emp.counts - counts) / np.sqrt(counts)
        return float(np.max(np.abs(z)))

    def two_point():
        b = fx.basis(2.0, 8)
        samples = dpp.sample_many(b, mc.n_samples, mc.seed + 2)
        emp, err, pred = dpp.two_point_diagnostic(samples, b, Ball((0.3 + 0.0j,), 0.3), Ball((-0.3 + 0.0j,), 0.3))
        return abs(emp - pred) / err

    return [
        ("gram_closed_form", 1e-9, closed_gram, False),
        ("gram_residual", 1e-8, gram_residual, False),
        ("kernel_reproducing", 1e-7, reproducing, False),
        ("kernel_hermitian", 1e-12, hermitian, False),
        ("density_trace", 1e-6, density_trace, False),
        ("density_k8_closed_form", 1e-6, density_k8, False),
        ("projection_spectrum", 1e-8, projection, False),
        ("trace_identity", 1e-7, trace_identity, False),
        ("determinant_series", 1e-8, series, False),
        ("basis_independence", 1e-8, basis_independence, False),
        ("symbol_positivity", 0.0, symbol_positivity, False),
        ("jacobi_formula", 1e-6, jacobi, False),
        ("key_lemma", 1e-6, key_lemma, False),
        ("energy_primitive", 1e-6, energy_primitive, False),
        ("energy_t_integral", 1e-8, energy_t_integral, False),
        ("energy_closed_form_n1", 1e-10, energy_closed_form, False),
        ("admissibility", 0.0, admissibility, False),
        ("hessian_fd", 1e-6, hessian_fd, False),
        ("mc_laplace_functional", 3.0, laplace, True),
        ("mc_intensity", 4.0, intensity, True),
        ("mc_two_point", 3.0, two_point, True),
    ]


def run_identity_suite(config: Optional[ExperimentConfig] = None, threads: int = 1,
                       fault: Optional[str] = None, only: Optional[Sequence[str]] = None) -> IdentityReport:
    """Run the identity battery at small scale.

    ``fault="gram"`` corrupts the basis seen by the Gram-residual check only.
    Monte Carlo checks report ``skipped`` when ``config.mc.enabled`` is false;
    their residuals are deviations in standard errors.
    """
    config = config or ExperimentConfig()
    fx = _Fixtures(config, fault)
    checks = [c for c in _identity_checks(fx) if only is None or c[0] in only]
    out = []
    with threadpool_limits(limits=1):
        for name, tol, fn, needs_mc in checks:
            if needs_mc and not config.mc.enabled:
                out.append(CheckResult(name, "skipped", float("nan"), tol, "mc.enabled is false"))
                continue
            out.append(_check(name, tol, fn))
            log.info("check %s: %s", name, out[-1].status)
    return IdentityReport(tuple(out))


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class SampleRun:
    samples: list
    n_d: int
    projection_error: float

    @property
    def valid(self) -> bool:
        return self.projection_error <= 1e-8 and all(len(s) == self.n_d for s in self.samples)


def run_sampling(config: ExperimentConfig, seed: Optional[int] = None, threads: int = 1) -> SampleRun:
    """Draw ``config.sample.n_samples`` DPP configurations after checking the projection property."""
    sc = config.sample
    degree = sc.degree if sc.degree is not None else config.degree(sc.k)
    grid = config.grid_for(degree)
    with threadpool_limits(limits=1):
        basis = build_basis(grid, sc.k, config.make_weight(), degree)
        err = float(np.max(np.abs(operators.projection_spectrum(basis) - 1.0)))
        if err > 1e-8:
            return SampleRun([], basis.dim, err)
        seed = config.mc.seed if seed is None else seed
        samples = dpp.sample_many(basis, sc.n_samples, seed, threads)
    return SampleRun(samples, basis.dim, err)


def samples_to_json(run: SampleRun) -> str:
    items = []
    for s in run.samples:
        pts = ", ".join("[" + ", ".join(f"[{_fmt(c.real)}, {_fmt(c.imag)}]" for c in p) + "]" for p in s.points)
        items.append(f'    {{"sample_id": {s.index}, "points": [{pts}]}}')
    return '{\n  "samples": [\n' + ",\n".join(items) + "\n  ]\n}\n"


def with_seed(config: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None:
        return config
    return replace(config, mc=replace(config.mc, seed=int(seed)))


__all__ = [
    "AdmissibilityError", "CheckResult", "ConfigError", "ConvergenceReport", "ConvergenceRow",
    "DegreeRule", "ExperimentConfig", "IdentityReport", "McConfig", "OutputConfig", "REPORT_FIELDS",
    "SampleConfig", "SampleRun", "derivative_identity_residual", "emit_report", "load_report",
    "make_test_function", "make_weight", "run_convergence_experiment", "run_identity_suite",
    "run_sampling", "samples_to_json", "scaled_log_det", "with_seed",
]
