import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bergman_dpp.energy import (default_t_grid, energy, energy_by_t_integral, energy_derivative,
                                energy_primitive_check, mixed_coefficients, mixed_ma_density)
from bergman_dpp.geometry import DomainSpec, build_quadrature
from bergman_dpp.weights import AdmissibilityError, TestFunction, WeightFunction

herm2 = st.lists(st.floats(-3, 3), min_size=4, max_size=4).map(
    lambda v: np.array([[v[0], v[2] + 1j * v[3]], [v[2] - 1j * v[3], v[1]]]))


def test_mixed_density_n1():
    assert mixed_ma_density(np.array([[2.5]]), np.array([[1.0]]), 1) == pytest.approx(2.5 / math.pi)
    assert mixed_ma_density(np.array([[2.5]]), np.array([[1.0]]), 0) == pytest.approx(1.0 / math.pi)


def test_mixed_density_n2():
    assert mixed_ma_density(np.eye(2), np.eye(2), 1) == pytest.approx(2 / math.pi**2)
    a, b = np.diag([1.0, 2.0]), np.diag([3.0, 4.0])
    assert mixed_coefficients(a, b)[1] == pytest.approx(10.0)
    assert mixed_ma_density(a, b, 1) == pytest.approx(10 / math.pi**2)
    with pytest.raises(ValueError):
        mixed_ma_density(a, b, 3)


@given(a=herm2, b=herm2)
def test_mixed_coefficients_polarization(a, b):
    sig = mixed_coefficients(a, b)
    scale = 1 + np.abs(a).max() ** 2 + np.abs(b).max() ** 2
    assert abs(sig.sum() - np.linalg.det(a + b).real) <= 1e-10 * scale
    assert abs(sig[2] - np.linalg.det(a).real) <= 1e-10 * scale
    assert abs(sig[0] - np.linalg.det(b).real) <= 1e-10 * scale
    # symbolic expansion of sigma_1 for 2x2
    s1 = a[0, 0] * b[1, 1] + a[1, 1] * b[0, 0] - a[0, 1] * b[1, 0] - a[1, 0] * b[0, 1]
    assert abs(sig[1] - s1.real) <= 1e-10 * scale


@pytest.fixture(scope="module")
def grid1():
    return build_quadrature(DomainSpec.disk(), (96, 96))


@pytest.fixture(scope="module")
def setup2():
    g = build_quadrature(DomainSpec.bidisk(), (24, 24))
    return g, WeightFunction.quadratic_diagonal([1.0, 2.0]), TestFunction.bump_with_hessian_norm([0.1, -0.1j], 0.5, 0.5)


def test_energy_of_zero(grid1):
    rep = energy(WeightFunction.quadratic(), TestFunction.zero(), grid1)
    assert rep.energy == 0.0 and rep.derivative_check == 0.0
    assert energy_derivative(WeightFunction.quadratic(), TestFunction.zero(), 0.3, grid1) == 0.0


def test_energy_n1_closed_form(grid1, phi):
    u = TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.5)
    rep = energy(phi, u, grid1)
    uv = u(grid1.nodes)
    lap = u.hessian(grid1.nodes)[:, 0, 0].real
    first = np.sum(grid1.weights * uv) / math.pi
    second = np.sum(grid1.weights * uv * lap) / (2 * math.pi)
    assert rep.energy == pytest.approx(first + second, abs=1e-10)
    assert rep.energy == pytest.approx(sum(rep.per_j), abs=1e-18)
    assert rep.derivative_check <= 1e-6


def test_energy_derivative_n1(grid1, phi):
    u = TestFunction.bump([0.1], 0.5, 0.02)
    uv, lap = u(grid1.nodes), u.hessian(grid1.nodes)[:, 0, 0].real
    for t in (0.0, 0.4, 1.0):
        direct = np.sum(grid1.weights * uv * (1 + t * lap)) / math.pi
        assert energy_derivative(phi, u, t, grid1) == pytest.approx(direct, rel=1e-13)


def test_primitive_n1(grid1, phi):
    u = TestFunction.bump_with_hessian_norm([0.1 - 0.1j], 0.6, 0.8)
    assert energy_primitive_check(phi, u, grid1) <= 1e-6
    assert energy_primitive_check(phi, TestFunction.zero(), grid1) == 0.0
    with pytest.raises(ValueError):
        energy_primitive_check(phi, u, grid1, h=1e-2)


def test_primitive_n2(setup2):
    g, phi2, u2 = setup2
    assert energy_primitive_check(phi2, u2, g) <= 1e-6


def test_t_integral_n1_and_n2(grid1, phi, setup2):
    u = TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.5)
    e = energy(phi, u, grid1, with_check=False).energy
    assert energy_by_t_integral(phi, u, grid1) == pytest.approx(e, rel=1e-8)
    g, phi2, u2 = setup2
    e2 = energy(phi2, u2, g, with_check=False).energy
    assert energy_by_t_integral(phi2, u2, g) == pytest.approx(e2, rel=1e-8)
    assert len(energy(phi2, u2, g, with_check=False).per_j) == 3


def test_cocycle(grid1, phi):
    u = TestFunction.bump_with_hessian_norm([0.0], 0.5, 0.4)
    forward = energy(phi, u, grid1, with_check=False).energy
    backward = energy(phi.plus(u), u.scaled(-1.0), grid1, with_check=False).energy
    assert forward == pytest.approx(-backward, rel=1e-12)


def test_energy_rejects_inadmissible(grid1, phi):
    with pytest.raises(AdmissibilityError):
        energy(phi, TestFunction.bump_with_hessian_norm([0.0], 0.5, 3.0), grid1)


@given(norm=st.floats(0.05, 0.9), t=st.floats(0, 1))
def test_monotone_for_nonnegative_u(grid1, phi, norm, t):
    u = TestFunction.bump_with_hessian_norm([0.0], 0.5, norm)
    assert energy_derivative(phi, u, t, grid1) >= 0


def test_default_t_grid():
    t = default_t_grid()
    assert len(t) == 11 and t.min() > 0 and t.max() < 1
