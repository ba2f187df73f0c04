import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_unitary
from tmqc.classical import HKernel
from tmqc.coords import CanonicalState, ComplexCoords, CoordinateMap, UnitaryBasis, build_fourier, from_complex, \
    inverse_transform, to_complex, transform
from tmqc.fssh import (CouplingVector, ehrenfest_force_expectation, fssh_force_expectation,
                       hellmann_feynman_coupling, hop_probabilities, rescale, select_hop, time_derivative_coupling)
from tmqc.model import ModelParams, build_hq, electronic_eigenbasis, fourier_basis
from tmqc.quantum import Adiabatic, QuantumFrame, adiabatic_decompose, real_project


def two_level(x, v=0.1):
    return np.array([[x, v], [v, -x]])


def test_static_hamiltonian_gives_zero_coupling(rng):
    h = two_level(0.3)
    a = adiabatic_decompose(h, np.array([1.0, 0.0]))
    b = adiabatic_decompose(h, np.array([1.0, 0.0]), prev=a)
    np.testing.assert_allclose(time_derivative_coupling(a, b, 0.01), 0.0, atol=1e-12)


def test_coupling_antihermitian(rng):
    n = 5
    U1 = random_unitary(n, rng)
    U2 = random_unitary(n, rng)
    a = Adiabatic(np.arange(n, dtype=float), U1, np.zeros(n))
    b = Adiabatic(np.arange(n, dtype=float), U2, np.zeros(n))
    T = time_derivative_coupling(a, b, 0.1)
    np.testing.assert_allclose(T, -T.conj().T, atol=1e-14)
    assert np.all(np.diag(T) == 0)


def test_avoided_crossing_coupling():
    """H = [[x, v], [v, -x]] with x = s t: mixing angle theta = atan2(v, x) / 2."""
    s, v, dt, t = 1.0, 0.1, 1e-3, 0.02
    psi = np.array([1.0, 0.0])
    prev = adiabatic_decompose(two_level(s * t, v), psi)
    cur = adiabatic_decompose(two_level(s * (t + dt), v), psi, prev=prev)
    T = time_derivative_coupling(prev, cur, dt)
    x = s * (t + 0.5 * dt)
    dtheta = 0.5 * (-v * s) / (x * x + v * v)
    assert abs(abs(T[0, 1]) - abs(dtheta)) < 1e-4


def test_hop_probability_rules():
    T = np.array([[0, 2.0, -1.0], [-2.0, 0, 0.5], [1.0, -0.5, 0]])
    A = np.array([0.8, 0.0, 0.6])
    P = hop_probabilities(T, A, 0, 0.01)
    assert P[1] == 0.0  # zero coefficient
    assert P[2] == 0.0  # negative raw value clipped
    assert P[0] == 1.0
    assert np.all(hop_probabilities(np.zeros((3, 3)), A, 0, 0.01) == [1, 0, 0])
    A2 = np.array([0.6, 0.8, 0.0])
    P2 = hop_probabilities(T, A2, 0, 0.01)
    assert P2[1] == pytest.approx(2 * 2.0 * 0.8 / 0.6 * 0.01)
    assert P2.sum() == pytest.approx(1.0)


def test_hop_probabilities_renormalised_and_vanishing_active():
    T = np.array([[0, 100.0], [-100.0, 0]])
    P = hop_probabilities(T, np.array([0.1, 0.99]), 0, 0.1)
    assert P[1] == 1.0 and P[0] == 0.0
    P = hop_probabilities(T, np.array([0.0, 1.0]), 0, 0.1)
    np.testing.assert_array_equal(P, [1.0, 0.0])


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_hop_probabilities_bounded(n, seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
    T = X - X.conj().T
    A = r.standard_normal(n) + 1j * r.standard_normal(n)
    P = hop_probabilities(T, A, int(r.integers(n)), float(r.uniform(1e-3, 1.0)))
    assert np.all(P >= 0) and np.all(P <= 1) and P.sum() == pytest.approx(1.0)


def test_select_hop():
    assert select_hop(np.array([1.0, 0.0, 0.0]), 0, 0.3) is None
    for u in (0.0, 0.5, 0.999999):
        assert select_hop(np.array([0.0, 1.0]), 0, u) == 1
    P = np.array([0.9, 0.05, 0.05])
    assert select_hop(P, 0, 0.02) == 1
    assert select_hop(P, 0, 0.07) == 2
    assert select_hop(P, 0, 0.2) is None
    rng1, rng2 = np.random.default_rng(5), np.random.default_rng(5)
    seq1 = [select_hop(P, 0, rng1.random()) for _ in range(50)]
    seq2 = [select_hop(P, 0, rng2.random()) for _ in range(50)]
    assert seq1 == seq2


def _instance(rng, n=6, basis=None, delta=1.0):
    p = ModelParams(N=n, delta=delta)
    cmap = p.coordinate_map()
    s = CanonicalState(rng.standard_normal(n) * 5, rng.standard_normal(n), 1.0)
    zn = to_complex(s, cmap).z
    h = build_hq(p) + np.diag(p.coupling * s.q)
    E, V = np.linalg.eigh(h)
    return p, cmap, s, zn, E, V


def test_hellmann_feynman_matches_finite_difference(rng):
    p, cmap, s, zn, E, V = _instance(rng)
    a, b = 0, 1
    cv = hellmann_feynman_coupling(real_project(V[:, a]), real_project(V[:, b]), E[a], E[b], p.coupling, cmap)
    # oracle: <a| d b / dq_n> from finite differences of the sign-aligned eigenvector
    eps = 1e-6
    fd = np.zeros(p.N)
    for n in range(p.N):
        dq = np.zeros(p.N)
        dq[n] = eps
        vs = []
        for sgn in (1, -1):
            _, W = np.linalg.eigh(build_hq(p) + np.diag(p.coupling * (s.q + sgn * dq)))
            w = W[:, b] * np.sign(W[:, b] @ V[:, b])
            vs.append(w)
        fd[n] = real_project(V[:, a]) @ ((vs[0] - vs[1]) / (2 * eps)) * np.sign(real_project(V[:, b]) @ V[:, b])
    np.testing.assert_allclose(cv.c * np.sign(real_project(V[:, a]) @ V[:, a]), fd, atol=1e-5)


def test_hellmann_feynman_degenerate_and_trivial():
    cmap = CoordinateMap.harmonic(3, 0.2)
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    assert np.all(hellmann_feynman_coupling(a, b, 0.0, 1.0, 0.5, cmap).c == 0)
    v = np.ones(3) / math.sqrt(3)
    assert np.all(hellmann_feynman_coupling(v, v, 0.0, 1.0, 0.0, cmap).c == 0)
    assert np.all(hellmann_feynman_coupling(v, v, 1.0, 1.0 + 1e-12, 0.5, cmap).c == 0)


def test_coupling_vector_chain_rule(rng):
    cmap = CoordinateMap.harmonic(5, 0.2)
    U = UnitaryBasis(random_unitary(5, rng), np.arange(5))
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    phys = hellmann_feynman_coupling(a, b, 0.0, 0.7, 0.3, cmap)
    tr = hellmann_feynman_coupling(a, b, 0.0, 0.7, 0.3, cmap, U)
    np.testing.assert_allclose(tr.D, U.matrix @ (0.5 * cmap.q_scale * phys.c), atol=1e-12)
    np.testing.assert_allclose(phys.D, 0.5 * cmap.q_scale * phys.c, atol=1e-15)


def _physical_rescale(p, c, gap, m=1.0):
    """Oracle: solve sum (p - g c)^2 / 2m + gap = sum p^2 / 2m for the smaller-|g| root."""
    a = np.sum(c * c) / (2 * m)
    b = -np.sum(p * c) / m
    disc = b * b - 4 * a * gap
    if disc < 0:
        return None
    roots = [(-b + math.sqrt(disc)) / (2 * a), (-b - math.sqrt(disc)) / (2 * a)]
    return min(roots, key=abs)


@pytest.mark.parametrize("basis_name", ["site", "fourier", "random"])
def test_rescale_matches_physical_momentum_rescale(basis_name, rng):
    n, omega = 6, 0.2
    cmap = CoordinateMap.harmonic(n, omega)
    basis = {"site": None, "fourier": build_fourier(n),
             "random": UnitaryBasis(random_unitary(n, rng), np.arange(n))}[basis_name]
    s = CanonicalState(rng.standard_normal(n), 3 * rng.standard_normal(n), 1.0)
    zn = to_complex(s, cmap)
    z = zn.z if basis is None else transform(zn, basis).z
    kernel = HKernel.harmonic(basis, cmap, omega)
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    gap = 0.05
    cv = hellmann_feynman_coupling(a, b, 0.0, gap, 0.5, cmap, basis)
    z2, gamma, ok = rescale(z, 0.0, gap, cv, kernel)
    g_oracle = _physical_rescale(s.p, cv.c, gap)
    assert ok == (g_oracle is not None)
    assert gamma == pytest.approx(g_oracle, rel=1e-10)
    back = from_complex(ComplexCoords(z2) if basis is None else inverse_transform(ComplexCoords(z2, basis)), cmap)
    np.testing.assert_allclose(back.q, s.q, atol=1e-10)
    np.testing.assert_allclose(back.p, s.p - gamma * cv.c, atol=1e-10)
    assert kernel.quadratic(z2) + gap == pytest.approx(kernel.quadratic(z), abs=1e-9)


def test_rescale_degenerate_and_frustrated(rng):
    n = 4
    cmap = CoordinateMap.harmonic(n, 0.2)
    kernel = HKernel.harmonic(None, cmap, 0.2)
    z = to_complex(CanonicalState(np.zeros(n), np.full(n, 0.01), 1.0), cmap).z
    cv = hellmann_feynman_coupling(np.ones(n) / 2, np.array([0.5, -0.5, 0.5, -0.5]), 0.0, 1.0, 0.1, cmap)
    z2, gamma, ok = rescale(z, 0.0, 0.0, cv, kernel)
    assert ok and gamma == 0.0 and np.array_equal(z2, z)
    z3, gamma, ok = rescale(z, 0.0, 5.0, cv, kernel)
    assert not ok and np.array_equal(z3, z)
    zero = CouplingVector(np.zeros(n, complex), np.zeros(n))
    z4, gamma, ok = rescale(z, 0.0, 1.0, zero, kernel)
    assert not ok and np.array_equal(z4, z)
    z5, gamma, ok = rescale(z, 0.0, 5.0, cv, kernel, reverse_frustrated=True)
    assert not ok and kernel.quadratic(z5) == pytest.approx(kernel.quadratic(z), abs=1e-12)
    back = from_complex(ComplexCoords(z5), cmap)
    # the momentum component along c is reversed, the rest unchanged
    c = cv.c / np.linalg.norm(cv.c)
    p0 = np.full(n, 0.01)
    assert back.p @ c == pytest.approx(-(p0 @ c), abs=1e-12)


def test_force_expectations():
    p = ModelParams(N=6, g=0.0)
    F = fourier_basis(p)
    frame_site = QuantumFrame.build(build_hq(p), None, p.coupling)
    e = np.zeros(6, complex)
    e[2] = 1
    np.testing.assert_allclose(ehrenfest_force_expectation(e, frame_site), np.eye(6)[2])
    frame_k = QuantumFrame.build(build_hq(p), F, p.coupling)
    k0 = np.zeros(6, complex)
    k0[int(np.flatnonzero(F.labels == 0)[0])] = 1
    np.testing.assert_allclose(ehrenfest_force_expectation(k0, frame_k), np.full(6, 1 / 6), atol=1e-15)
    ad = adiabatic_decompose(frame_site.total(np.zeros(6)), np.ones(6, complex) / math.sqrt(6))
    np.testing.assert_allclose(fssh_force_expectation(0, ad, frame_site), np.full(6, 1 / 6), atol=1e-12)


def test_force_expectation_localised_state():
    p = ModelParams(N=30, delta=2.0)
    frame = QuantumFrame.build(build_hq(p), None, p.coupling)
    ad = adiabatic_decompose(frame.total(np.zeros(30)), np.ones(30, complex) / math.sqrt(30))
    occ = fssh_force_expectation(0, ad, frame)
    assert int(np.argmax(occ)) == p.impurity_site and occ[p.impurity_site] > 0.5
    assert occ.sum() == pytest.approx(1.0, abs=1e-12)
    eb = electronic_eigenbasis(build_hq(p))
    assert np.abs(eb.energies[0] - ad.energies[0]) < 1e-12
