"""Wavefunction propagation, instantaneous eigenstates and density-matrix populations.

Quantum basis convention: state xi of a basis U has physical amplitudes
<n|xi> = U[xi, n], so coefficients transform as psi_xi = sum_n conj(U[xi, n]) psi_n.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from scipy.linalg import lapack

from .coords import UnitaryBasis
from .errors import DimensionError, NumericError
from .model import ModelParams, sign_fix

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-10


def state_map(basis: Optional[UnitaryBasis], n: Optional[int] = None) -> np.ndarray:
    """Matrix taking physical amplitudes to coefficients in ``basis``."""
    if basis is None:
        return np.eye(n, dtype=complex)
    return basis.matrix.conj()


@dataclass(frozen=True, eq=False)
class QuantumFrame:
    """H_q and the Holstein coupling expressed in a quantum working basis."""

    hq: np.ndarray  # working basis
    smap: np.ndarray  # working <- physical
    coupling: float

    @classmethod
    def build(cls, hq_phys: np.ndarray, basis: Optional[UnitaryBasis], coupling: float) -> "QuantumFrame":
        S = state_map(basis, hq_phys.shape[0])
        hq = S @ hq_phys @ S.conj().T
        if basis is not None and basis.is_real:
            hq = hq.real
            S = S.real
        return cls(hq, S, float(coupling))

    def __post_init__(self):
        S = self.smap
        identity = S.shape[0] == S.shape[1] and np.array_equal(S, np.eye(S.shape[0]))
        object.__setattr__(self, "_identity", identity)
        object.__setattr__(self, "_back", S.conj().T.copy())

    @property
    def size(self) -> int:
        return self.hq.shape[0]

    def total(self, q: np.ndarray) -> np.ndarray:
        """H_q + sum_n coupling q_n |n><n| for physical positions q."""
        if self._identity:
            out = self.hq.copy()
            idx = np.arange(q.size)
            out[idx, idx] += self.coupling * q
            return out
        return self.hq + (self.smap * (self.coupling * q)) @ self._back

    def to_physical(self, v: np.ndarray) -> np.ndarray:
        return self._back @ v

    def site_density(self, v: np.ndarray) -> np.ndarray:
        """|<n|v>|^2 for a working-basis vector (or columns of one)."""
        amp = v if self._identity else self._back @ v
        return (amp * amp.conj()).real


def total_hq(z, params: ModelParams, hq_phys: np.ndarray, quantum_basis: Optional[UnitaryBasis] = None,
             classical_basis: Optional[UnitaryBasis] = None) -> np.ndarray:
    """H_q + H_q-c(z) in the quantum working basis.

    ``z`` are classical coordinates in ``classical_basis`` (h_n = omega); they are
    read back to physical positions through U^dagger before coupling.
    """
    z = np.asarray(getattr(z, "z", z), dtype=complex)
    if classical_basis is not None:
        if z.size != classical_basis.n_states:
            raise DimensionError("coordinates do not match the classical basis")
        z = classical_basis.matrix.conj().T @ z
    if z.size != params.N:
        raise DimensionError(f"expected {params.N} physical coordinates, got {z.size}")
    q = z.real * math.sqrt(2.0 / (params.mass * params.omega))
    frame = QuantumFrame.build(hq_phys, quantum_basis, params.coupling)
    return frame.total(q)


@dataclass(frozen=True, eq=False)
class Adiabatic:
    energies: np.ndarray
    vectors: np.ndarray  # columns |alpha> in the working basis
    coeffs: np.ndarray  # A_alpha = <alpha|psi>

    @property
    def size(self) -> int:
        return self.energies.size


def _degenerate_blocks(E: np.ndarray, tol: float):
    start = 0
    while start < E.size:
        stop = start + 1
        while stop < E.size and E[stop] - E[stop - 1] < tol:
            stop += 1
        yield start, stop
        start = stop


def align_phases(vectors: np.ndarray, energies: np.ndarray, prev: np.ndarray,
                 tol: float = DEGENERATE_TOL) -> np.ndarray:
    """Gauge ``vectors`` so overlaps with ``prev`` are real and positive.

    Inside a degenerate block the rotation R = V W^dagger (from the SVD
    O = W S V^dagger of the overlap block) maximises the overlap trace.
    """
    ov = np.einsum("ij,ij->j", prev.conj(), vectors)
    mag = np.abs(ov)
    phase = np.where(mag > 0, np.conj(ov) / np.where(mag > 0, mag, 1.0), 1.0)
    out = vectors * phase
    if energies.size > 1 and np.min(np.diff(energies)) < tol:
        for a, b in _degenerate_blocks(energies, tol):
            if b - a == 1:
                continue
            O = prev[:, a:b].conj().T @ vectors[:, a:b]
            W, _, Vh = np.linalg.svd(O)
            out[:, a:b] = vectors[:, a:b] @ (Vh.conj().T @ W.conj().T)
    return out


def eigh_checked(h: np.ndarray):
    """Full eigendecomposition (ascending) through LAPACK ?syevd / ?heevd."""
    if np.iscomplexobj(h):
        E, V, info = lapack.zheevd(h)
    else:
        E, V, info = lapack.dsyevd(h)
    if info != 0 or not np.all(np.isfinite(E)):
        raise NumericError(f"eigensolver failed (info={info})")
    return E, V


def eigvec_single(h: np.ndarray, index: int) -> np.ndarray:
    """Eigenvector number ``index`` (ascending order) via LAPACK ?syevr / ?heevr."""
    if np.iscomplexobj(h):
        _, V, m, _, info = lapack.zheevr(h, range="I", il=index + 1, iu=index + 1)
    else:
        _, V, m, _, info = lapack.dsyevr(h, range="I", il=index + 1, iu=index + 1)
    if info != 0 or m != 1:
        raise NumericError(f"eigensolver failed (info={info})")
    return V[:, 0]


def adiabatic_decompose(h_tot: np.ndarray, psi: np.ndarray, prev: Optional[Adiabatic] = None) -> Adiabatic:
    E, V = eigh_checked(h_tot)
    if prev is None:
        V = np.column_stack([sign_fix(V[:, j]) for j in range(E.size)]) if E.size else V
    else:
        V = align_phases(V, E, prev.vectors)
    return Adiabatic(E, V, V.conj().T @ psi)


def propagate_psi(psi: np.ndarray, H: Union[np.ndarray, Callable[[float], np.ndarray]], dt: float,
                  t: float = 0.0) -> np.ndarray:
    """One RK4 step of i dpsi/dt = H psi (hbar = 1).

    ``H`` is a matrix or a callable of time evaluated at t, t + dt/2 and t + dt.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if callable(H):
        h0, hm, h1 = H(t), H(t + 0.5 * dt), H(t + dt)
    else:
        h0 = hm = h1 = H
    k1 = -1j * (h0 @ psi)
    k2 = -1j * (hm @ (psi + 0.5 * dt * k1))
    k3 = -1j * (hm @ (psi + 0.5 * dt * k2))
    k4 = -1j * (h1 @ (psi + dt * k3))
    return psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def renormalize(psi: np.ndarray, tol: float = 1e-12):
    """Return (psi, drift); psi is rescaled to unit norm when |norm - 1| > tol."""
    nrm = float(np.linalg.norm(psi))
    drift = nrm - 1.0
    if abs(drift) > tol:
        log.debug("renormalizing wavefunction, norm drift %.3e", drift)
        psi = psi / nrm
    return psi, drift


def real_project(v: np.ndarray) -> np.ndarray:
    """Closest real unit vector to ``v`` up to a global phase.

    theta* = -arg(sum_j v_j^2) / 2 maximises |Re(exp(i theta) v)|; the result
    is normalised and sign-fixed (largest entry positive).
    """
    v = np.asarray(v)
    if not np.iscomplexobj(v):
        return np.real(sign_fix(v / np.linalg.norm(v)))
    s = np.sum(v * v)
    if abs(s) < 1e-12 * np.vdot(v, v).real:
        log.warning("real projection ill-defined (sum v^2 = 0); using theta = 0")
        theta = 0.0
    else:
        theta = -0.5 * np.angle(s)
    r = (np.exp(1j * theta) * v).real
    r = r / np.linalg.norm(r)
    return np.real(sign_fix(r))


def density_matrix(active: int, A: np.ndarray) -> np.ndarray:
    """Surface-hopping density matrix in the instantaneous eigenbasis.

    Diagonal: indicator of the active surface.  Off-diagonal: coherences from
    the wavefunction, rho[alpha, beta] = <alpha|rho|beta> = A_alpha conj(A_beta).
    """
    A = np.asarray(A, dtype=complex)
    rho = np.outer(A, A.conj())
    np.fill_diagonal(rho, 0.0)
    rho[active, active] = 1.0
    return rho


def populations(rho: np.ndarray, chain: Optional[np.ndarray] = None) -> np.ndarray:
    """Diagonal of chain @ rho @ chain^dagger.

    ``chain`` maps instantaneous-eigenbasis amplitudes to target-basis
    amplitudes (target <- physical <- working <- instantaneous); ``None``
    returns the diagonal of ``rho`` itself.
    """
    if chain is None:
        return np.real(np.diag(rho)).copy()
    if chain.shape[1] != rho.shape[0]:
        raise DimensionError("chain does not match density matrix")
    return np.einsum("na,ab,nb->n", chain, rho, chain.conj()).real


def fssh_populations(active: int, A: np.ndarray, chain: np.ndarray) -> np.ndarray:
    """populations(density_matrix(active, A), chain) in O(N M) operations."""
    cA = chain @ A
    return (np.abs(cA) ** 2 - (np.abs(chain) ** 2) @ (np.abs(A) ** 2) + np.abs(chain[:, active]) ** 2)
