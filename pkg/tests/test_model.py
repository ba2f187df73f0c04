import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tmqc.coords import apply_mask, build_fourier
from tmqc.errors import DomainError
from tmqc.model import (ModelParams, build_hq, eigen_basis, electronic_eigenbasis, fourier_basis, holstein_vqc,
                        initial_wavefunction, participation_ratio, sign_fix, site_basis, truncation_mask)


def test_params_validation():
    assert ModelParams(N=10).impurity_site == 5
    for bad in (dict(N=1), dict(omega=0.0), dict(T=-1.0), dict(N=4, impurity_site=4), dict(mass=0.0)):
        with pytest.raises(DomainError):
            ModelParams(**bad)


def test_coupling_prefactor():
    assert ModelParams(g=1.0, omega=0.2).coupling == pytest.approx(math.sqrt(0.016), rel=1e-15)
    assert ModelParams(g=1.0, omega=0.2).coupling == pytest.approx(0.126491, abs=1e-6)


def test_hq_structure():
    p = ModelParams(N=6, J=0.7, delta=1.3, impurity_site=2)
    H = build_hq(p)
    np.testing.assert_array_equal(H, H.T)
    assert H[0, 5] == H[5, 0] == -0.7
    assert H[2, 2] == -1.3
    expected = -2 * 0.7 - 1.3 * (np.arange(6) == 2)
    np.testing.assert_allclose(H.sum(axis=1), expected, atol=1e-15)


@given(st.integers(3, 40), st.floats(0.1, 3.0))
def test_pristine_spectrum_is_circulant(N, J):
    E = np.linalg.eigvalsh(build_hq(ModelParams(N=N, J=J)))
    oracle = np.sort(-2 * J * np.cos(2 * np.pi * np.arange(N) / N))
    np.testing.assert_allclose(E, oracle, atol=1e-10)


def test_n4_spectrum():
    np.testing.assert_allclose(np.linalg.eigvalsh(build_hq(ModelParams(N=4))), [-2, 0, 0, 2], atol=1e-14)


def test_n2_double_bond():
    eb = electronic_eigenbasis(build_hq(ModelParams(N=2)))
    np.testing.assert_allclose(eb.energies, [-2, 2], atol=1e-14)
    np.testing.assert_allclose(eb.vectors[0], [1 / math.sqrt(2)] * 2, atol=1e-14)
    np.testing.assert_allclose(eb.vectors[1], [1 / math.sqrt(2), -1 / math.sqrt(2)], atol=1e-14)


def test_bound_state_and_localization():
    p = ModelParams(N=100, delta=2.0)
    eb = electronic_eigenbasis(build_hq(p))
    assert eb.energies[0] == pytest.approx(-math.sqrt(8.0), abs=1e-2)
    assert participation_ratio(eb.vectors[0]) < p.N / 10
    assert int(np.argmax(np.abs(eb.vectors[0]))) == p.impurity_site


@pytest.mark.parametrize("delta", [0.0, 2.0])
def test_eigenbasis_properties(delta):
    H = build_hq(ModelParams(N=30, delta=delta))
    eb = electronic_eigenbasis(H)
    V = eb.vectors
    assert np.isrealobj(V)
    np.testing.assert_allclose(V @ V.T, np.eye(30), atol=1e-12)
    np.testing.assert_allclose(H @ V.T, V.T * eb.energies, atol=1e-10)
    assert np.all(np.diff(eb.energies) >= 0)
    for v in V:
        j = np.flatnonzero(np.abs(v) >= np.abs(v).max() - 1e-10)[0]
        assert v[j] > 0


def test_degenerate_block_canonical_form(rng):
    """Any rotation of a degenerate eigenspace yields the same canonical vectors."""
    from conftest import random_orthogonal
    from tmqc.model import _canonical_block

    H = build_hq(ModelParams(N=12))
    E, V = np.linalg.eigh(H)
    block = V[:, np.abs(E - E[1]) < 1e-9]
    assert block.shape[1] == 2
    ref = _canonical_block(block)
    for _ in range(5):
        np.testing.assert_allclose(_canonical_block(block @ random_orthogonal(2, rng)), ref, atol=1e-12)
    np.testing.assert_allclose(ref.T @ ref, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(ref @ ref.T, block @ block.T, atol=1e-12)


def test_impurity_states_overlap_bloch_states():
    """Odd impurity eigenstates (above the bound state) nearly coincide with pristine ones."""
    N = 100
    imp = electronic_eigenbasis(build_hq(ModelParams(N=N, delta=2.0)))
    pri = electronic_eigenbasis(build_hq(ModelParams(N=N, delta=0.0)))
    for i in range(2, 9, 2):  # i = 3, 5, 7, 9 in one-based labels
        overlaps = np.abs(pri.vectors @ imp.vectors[i])
        assert overlaps.max() > 0.99


def test_sign_fix_ties():
    v = np.array([-0.5, 0.5, 0.1])
    np.testing.assert_array_equal(sign_fix(v), [0.5, -0.5, -0.1])
    c = sign_fix(np.array([0.1, 1j]))
    assert c[1] == pytest.approx(1.0)


def test_holstein_vqc():
    p = ModelParams(N=5, g=0.0)
    e, g = holstein_vqc(np.full(5, 0.2), np.ones(5, complex), p)
    assert e == 0.0 and np.all(g == 0)
    p = ModelParams(N=5, g=1.0, omega=0.2)
    z = np.linspace(0.1, 0.9, 5).astype(complex)
    q = 2 * z.real / math.sqrt(2 * 0.2)
    e, g = holstein_vqc(np.full(5, 0.2), z, p)
    assert e == pytest.approx(0.126491106 * q.mean(), rel=1e-8)
    _, g2 = holstein_vqc(np.full(5, 0.2), 3 * z + 1j, p)
    np.testing.assert_array_equal(g, g2)


def test_holstein_gradient_matches_fd(rng):
    p = ModelParams(N=4)
    occ = rng.dirichlet(np.ones(4))
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    _, g = holstein_vqc(occ, z, p)
    eps = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = eps
        dr = (holstein_vqc(occ, z + e, p)[0] - holstein_vqc(occ, z - e, p)[0]) / (2 * eps)
        di = (holstein_vqc(occ, z + 1j * e, p)[0] - holstein_vqc(occ, z - 1j * e, p)[0]) / (2 * eps)
        assert g[j] == pytest.approx(0.5 * (dr + 1j * di), rel=1e-6)


def test_truncation_rules():
    p = ModelParams(N=30)
    F = fourier_basis(p)
    assert truncation_mask(F, ecut=math.inf).size == 30
    by_k = truncation_mask(F, keep_fraction=0.5)
    assert by_k.size == 15
    by_e = truncation_mask(F, ecut=np.sort(F.energies)[14])
    np.testing.assert_array_equal(by_k, by_e)
    assert np.abs(F.labels[by_k]).max() < np.abs(F.labels[np.setdiff1d(np.arange(30), by_k)]).min()
    F8 = fourier_basis(ModelParams(N=8))
    kept = truncation_mask(F8, kcut=math.pi / 2)
    np.testing.assert_allclose(np.sort(F8.labels[kept]), np.array([-2, -1, 0, 1, 2]) * math.pi / 4)
    E = eigen_basis(ModelParams(N=30, delta=2.0))
    np.testing.assert_array_equal(truncation_mask(E, keep_fraction=0.5), np.arange(15))


def test_truncation_errors():
    p = ModelParams(N=6)
    with pytest.raises(DomainError):
        truncation_mask(site_basis(p), keep_fraction=0.5)
    with pytest.raises(DomainError):
        truncation_mask(eigen_basis(p), kcut=1.0)
    with pytest.raises(DomainError):
        truncation_mask(build_fourier(6), ecut=0.0)
    with pytest.raises(DomainError):
        truncation_mask(fourier_basis(p), keep_fraction=0.5, ecut=1.0)
    with pytest.raises(DomainError):
        truncation_mask(fourier_basis(p), keep_fraction=0.0)


def test_initial_wavefunction():
    np.testing.assert_allclose(initial_wavefunction(4), [0.5] * 4)
    for N in (1, 7, 30, 101):
        assert np.linalg.norm(initial_wavefunction(N)) == pytest.approx(1.0, abs=1e-15)
    F = build_fourier(9)
    c = F.matrix.conj() @ initial_wavefunction(9)
    k0 = int(np.flatnonzero(F.labels == 0)[0])
    assert abs(c[k0]) == pytest.approx(1.0, abs=1e-14)
    assert np.abs(np.delete(c, k0)).max() < 1e-14
    with pytest.raises(DomainError):
        initial_wavefunction(0)


def test_truncated_fourier_masks_compose():
    p = ModelParams(N=10)
    F = fourier_basis(p)
    sub = apply_mask(F, truncation_mask(F, keep_fraction=0.6))
    assert sub.n_states == 6 and sub.energies is not None
    np.testing.assert_allclose(sub.energies, -2 * np.cos(sub.labels))
