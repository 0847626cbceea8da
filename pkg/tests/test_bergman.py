import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from bergman_dpp.bergman import (BasisError, GramMatrix, bergman_density, build_basis, degree_for,
                                 density_limit, gram_matrix, kernel_eval, multi_indices, orthonormalize,
                                 pivoted_cholesky, truncation_tail_indicator)
from bergman_dpp.geometry import Ball, DomainSpec, build_quadrature, integrate
from bergman_dpp.weights import TestFunction, WeightFunction


def monomial_norm(a, k):
    """||z^a||^2 on the unit disk with weight e^{-k|z|^2}: pi * gamma(a+1, k) / k^{a+1}."""
    return float(mpmath.pi * mpmath.gammainc(a + 1, 0, k) / mpmath.mpf(k) ** (a + 1))


def test_gram_k1_d1(disk_grid, phi):
    g = gram_matrix(disk_grid, 1.0, phi, 1).matrix
    assert g[0, 0].real == pytest.approx(math.pi * (1 - math.exp(-1)), rel=1e-12)
    assert g[1, 1].real == pytest.approx(math.pi * (1 - 2 * math.exp(-1)), rel=1e-12)
    assert g[0, 0].real == pytest.approx(1.985865, abs=1e-6)
    assert g[1, 1].real == pytest.approx(0.830138, abs=1e-6)
    assert abs(g[0, 1]) <= 1e-12


@pytest.mark.parametrize("k", [1.0, 3.0, 8.0])
def test_gram_diagonal_any_k(disk_grid, phi, k):
    gm = gram_matrix(disk_grid, k, phi, 15)
    s = gm.scaled
    assert np.max(np.abs(s - np.diag(np.diag(s)))) <= 1e-12


def test_gram_bidisk_constant():
    g = build_quadrature(DomainSpec.bidisk(), (16, 16))
    gm = gram_matrix(g, 1.0, WeightFunction.quadratic(1.0, 2), 2).matrix
    assert gm[0, 0].real == pytest.approx(math.pi**2 * (1 - math.exp(-1)) ** 2, rel=1e-12)
    assert gm[0, 0].real == pytest.approx(3.943661, abs=1e-6)


def test_gram_needs_resolution(phi):
    g = build_quadrature(DomainSpec.disk(), (16, 16))
    with pytest.raises(BasisError):
        gram_matrix(g, 1.0, phi, 10)


def test_gram_hermitian_psd_nonradial(disk_grid):
    phi = WeightFunction.custom(lambda z: np.abs(z[:, 0]) ** 2 + 0.3 * z[:, 0].real, 1)
    gm = gram_matrix(disk_grid, 2.0, phi, 10)
    g = gm.matrix
    assert np.max(np.abs(g - g.conj().T)) <= 1e-15 * np.max(np.abs(g))
    assert np.linalg.eigvalsh(gm.scaled)[0] >= -1e-12


def test_orthonormalize_identity():
    b = orthonormalize(np.eye(4))
    assert b.dim == 4
    assert np.allclose(b.chol, np.eye(4))


def test_orthonormalize_repeated_row():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    x = np.concatenate([x, x[:, :1]], axis=1)  # last column duplicates the first
    g = x.conj().T @ x
    b = orthonormalize(g)
    assert b.dim == g.shape[0] - 1
    assert len(b.dropped) == 1


def test_orthonormalize_rejects_indefinite():
    with pytest.raises(BasisError):
        orthonormalize(np.diag([1.0, -0.5]))


def test_pivoted_cholesky_reconstructs():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    a = x.conj().T @ x
    L, piv, dropped = pivoted_cholesky(a)
    assert not dropped
    assert np.allclose(L @ L.conj().T, a[np.ix_(piv, piv)])


def test_closed_form_basis_k1(disk_grid, phi):
    b = build_basis(disk_grid, 1.0, phi, 1)
    z = np.array([[0.3 + 0.4j]])
    e = b.values(z)[0]
    assert e[0] == pytest.approx(1 / math.sqrt(math.pi * (1 - math.exp(-1))), rel=1e-12)
    assert e[1] == pytest.approx(z[0, 0] / math.sqrt(math.pi * (1 - 2 * math.exp(-1))), rel=1e-12)


def test_kernel_at_origin(disk_grid, phi):
    for d in (0, 3, 10):
        b = build_basis(disk_grid, 1.0, phi, d)
        assert kernel_eval(b, np.array([[0.0]]), np.array([[0.0]])).real == pytest.approx(
            1 / (math.pi * (1 - math.exp(-1))), rel=1e-12)
        assert bergman_density(b, np.array([[0.0]]))[0] == pytest.approx(0.503559, abs=1e-6)


def test_scaled_density_k8():
    g = build_quadrature(DomainSpec.disk(), (96, 128))
    b = build_basis(g, 8.0, WeightFunction.quadratic(), 40)
    val = bergman_density(b, np.array([[0.0]]), scaled=True)[0]
    assert val == pytest.approx(1 / (math.pi * (1 - math.exp(-8))), abs=1e-12)
    assert val == pytest.approx(0.318417, abs=1e-6)
    assert abs(val - 1 / math.pi) <= 4e-4


@given(z=st.complex_numbers(max_magnitude=0.95), w=st.complex_numbers(max_magnitude=0.95))
def test_kernel_hermitian(basis_k4, z, w):
    zz, ww = np.array([[z]]), np.array([[w]])
    assert kernel_eval(basis_k4, zz, ww) == np.conj(kernel_eval(basis_k4, ww, zz))
    assert kernel_eval(basis_k4, zz, zz).real >= 0


def test_reproducing_property(basis_k4, disk_grid):
    e = basis_k4.grid_values
    z = np.array([[0.2 - 0.5j], [0.7]])
    kz = basis_k4.weighted_values(z) @ np.conj(e).T
    rep = (kz * disk_grid.weights) @ e
    assert np.max(np.abs(rep - basis_k4.weighted_values(z))) <= 1e-7


def test_gram_residual_and_density_trace(basis_k4, disk_grid):
    assert basis_k4.gram_residual() <= 1e-8
    total = integrate(disk_grid, basis_k4.density(disk_grid.nodes)).real
    assert abs(total - basis_k4.dim) / basis_k4.dim <= 1e-6


def test_density_limit_values():
    z = np.array([[0.2 + 0.1j]])
    assert density_limit(WeightFunction.quadratic(), z)[0] == pytest.approx(1 / math.pi)
    assert density_limit(WeightFunction.quadratic(2.0), z)[0] == pytest.approx(2 / math.pi)
    phi2 = WeightFunction.quadratic_diagonal([1.0, 2.0])
    assert density_limit(phi2, np.array([[0.1, 0.2j]]))[0] == pytest.approx(2 / math.pi**2)


def test_multi_indices_graded():
    idx = multi_indices(2, 3)
    assert len(idx) == 10
    assert [sum(a) for a in idx] == sorted(sum(a) for a in idx)


def test_coeff_against_raw_monomials(disk_grid, phi):
    b = build_basis(disk_grid, 2.0, phi, 6)
    z = np.array([[0.3 - 0.2j], [-0.5]])
    raw = np.stack([z[:, 0] ** a for a in range(7)], axis=1)
    assert np.allclose(raw @ b.coeff.T, b.values(z), atol=1e-12)
    # e_j only involves monomials of index <= j
    assert np.all(np.tril(b.coeff) == b.coeff)


def tail_share(r, k, d):
    terms = [mpmath.mpf(r) ** (2 * a) / monomial_norm(a, k) for a in range(d + 1)]
    return float(terms[-1] / sum(terms))


def test_tail_indicator_oracle(phi):
    # radial weight: the top-degree share of rho_k grows with |z|, so the max sits at the outermost node
    b = build_basis(build_quadrature(DomainSpec.disk(), (96, 96)), 1.0, phi, 40)
    region = Ball((0.0,), 0.5)
    got = truncation_tail_indicator(b, region=region)
    r_max = np.abs(b.grid.nodes[region.contains(b.grid.nodes), 0]).max()
    assert got == pytest.approx(tail_share(r_max, 1.0, 40), rel=1e-6)
    assert got <= tail_share(0.5, 1.0, 40) <= 1e-10


def test_tail_indicator_too_small_degree(phi):
    g = build_quadrature(DomainSpec.disk(), (64, 64))
    b = build_basis(g, 8.0, phi, 8)
    assert truncation_tail_indicator(b) > 0.1
    assert truncation_tail_indicator(b, region=Ball((0.0,), 0.5)) > 1e-8


def test_tail_indicator_zero_support(basis_k4):
    u = TestFunction.zero()
    assert truncation_tail_indicator(basis_k4, region=u.support) == pytest.approx(
        truncation_tail_indicator(basis_k4, region=None))
    assert truncation_tail_indicator(basis_k4, region=np.zeros(basis_k4.grid.size, bool)) == 0.0


def test_tail_same_for_zero_perturbation(disk_grid, phi):
    u = TestFunction.zero()
    a = build_basis(disk_grid, 4.0, phi, 20)
    b = build_basis(disk_grid, 4.0, phi.plus(u), 20)
    assert truncation_tail_indicator(a) == truncation_tail_indicator(b)


def test_degree_rule():
    assert degree_for(4, 1.0) == 22
    assert degree_for(32, 1.0) == 106


def test_pointwise_convergence_and_bound(phi):
    rng = np.random.default_rng(3)
    r = 0.5 * np.sqrt(rng.uniform(size=20))
    probes = (r * np.exp(2j * np.pi * rng.uniform(size=20)))[:, None]
    prev = None
    sups = []
    for k in (2.0, 4.0, 8.0, 16.0):
        d = degree_for(k, 1.0)
        g = build_quadrature(DomainSpec.disk(), (2 * d + 2, 2 * d + 2))
        b = build_basis(g, k, phi, d)
        err = np.abs(bergman_density(b, probes, scaled=True) - 1 / math.pi)
        if prev is not None:
            assert np.all(err < prev)
        prev = err
        sups.append(bergman_density(b, probes, scaled=True).max())
        if k >= 8:
            assert sups[-1] <= 2 / math.pi


def test_local_bound_stable_in_degree(phi):
    g = build_quadrature(DomainSpec.disk(), (96, 96))
    probes = np.array([[0.1], [0.3j], [-0.4 + 0.1j]])
    vals = []
    for d in (30, 40):
        b = build_basis(g, 4.0, phi, d)
        assert truncation_tail_indicator(b, region=Ball((0.0,), 0.5)) <= 1e-8
        vals.append(np.sum(np.abs(b.values(probes)) ** 2, axis=1))
    assert np.allclose(vals[0], vals[1], rtol=1e-10)


def test_gram_matrix_from_array():
    g = GramMatrix.from_array(np.diag([4.0, 9.0]))
    assert np.allclose(g.scaled, np.eye(2)) and np.allclose(g.matrix, np.diag([4.0, 9.0]))


@pytest.mark.parametrize("a", [0, 5, 20])
@pytest.mark.parametrize("k", [1.0, 2.0, 4.0, 8.0])
def test_monomial_norms_mpmath(disk_grid, phi, a, k):
    gm = gram_matrix(disk_grid, k, phi, 20).matrix
    assert gm[a, a].real == pytest.approx(monomial_norm(a, k), rel=1e-9)


def test_box_domain_basis():
    g = build_quadrature(DomainSpec.box([(-1, 1, -1, 1)]), (32, 32))
    b = build_basis(g, 2.0, WeightFunction.quadratic(), 8)
    assert b.gram_residual() <= 1e-8
