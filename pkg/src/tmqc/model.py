"""Tight-binding lattice with a single impurity and Holstein coupling to harmonic modes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coords import UnitaryBasis, CoordinateMap, build_fourier
from .errors import DomainError, NumericError

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    N: int = 30
    J: float = 1.0
    delta: float = 0.0
    impurity_site: Optional[int] = None
    omega: float = 0.2
    g: float = 1.0
    T: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.impurity_site is None:
            object.__setattr__(self, "impurity_site", self.N // 2)
        if self.N < 2:
            raise DomainError("lattice needs N >= 2")
        if not self.omega > 0:
            raise DomainError("omega must be positive")
        if self.T < 0:
            raise DomainError("temperature must be non-negative")
        if not 0 <= self.impurity_site < self.N:
            raise DomainError(f"impurity site {self.impurity_site} outside [0, {self.N})")
        if not self.mass > 0:
            raise DomainError("mass must be positive")

    @property
    def coupling(self) -> float:
        """g sqrt(2 omega^3), the Holstein site-energy shift per unit displacement."""
        return self.g * math.sqrt(2.0 * self.omega**3)

    def coordinate_map(self) -> CoordinateMap:
        return CoordinateMap.harmonic(self.N, self.omega, self.mass)


# name -> ModelParams overrides; the run-level defaults live in config.PRESETS
MODEL_PRESETS = {
    "pristine": dict(N=30, J=1.0, delta=0.0, omega=0.2, g=1.0, T=1.0),
    "impurity": dict(N=30, J=1.0, delta=2.0, omega=0.2, g=1.0, T=1.0),
    "eigeninspect": dict(N=100, J=1.0, delta=2.0, omega=0.2, g=1.0, T=1.0),
}


def build_hq(params: ModelParams) -> np.ndarray:
    """-J sum_n (c+_{n+1} c_n + h.c.) - delta c+_nbar c_nbar with periodic wrap."""
    N = params.N
    H = np.zeros((N, N))
    for n in range(N):
        m = (n + 1) % N
        H[m, n] += -params.J
        H[n, m] += -params.J
    H[params.impurity_site, params.impurity_site] -= params.delta
    return H


def sign_fix(v: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Scale ``v`` so its largest-magnitude entry is real positive.

    Entries within ``tol`` of the maximum magnitude count as tied; the lowest
    index among them wins.
    """
    mag = np.abs(v)
    j = int(np.flatnonzero(mag >= mag.max() - tol)[0])
    return v * (np.conj(v[j]) / mag[j])


def _canonical_block(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs) (columns).

    Projected unit vectors P e_j are taken in order of decreasing weight
    (ties by site index) and Gram-Schmidt orthogonalised.
    """
    d = vecs.shape[1]
    P = vecs @ vecs.conj().T
    weight = np.round(np.real(np.diag(P)), 10)
    order = np.lexsort((np.arange(P.shape[0]), -weight))
    out = []
    for j in order:
        w = P[:, j].copy()
        for u in out:
            w -= u * (u.conj() @ w)
        nrm = np.linalg.norm(w)
        if nrm > 1e-6:
            out.append(w / nrm)
            if len(out) == d:
                break
    return np.column_stack(out)


@dataclass(frozen=True, eq=False)
class ElectronicEigenbasis:
    energies: np.ndarray
    vectors: np.ndarray  # rows are eigenvectors phi_i

    def as_basis(self) -> UnitaryBasis:
        """Eigenvectors as a UnitaryBasis labelled i = 1..N (ascending energy)."""
        N = self.energies.size
        return UnitaryBasis(self.vectors, np.arange(1, N + 1), kind="eigen", energies=self.energies)


def electronic_eigenbasis(hq: np.ndarray) -> ElectronicEigenbasis:
    hq = np.asarray(hq)
    if np.abs(hq - hq.conj().T).max() > 1e-12:
        raise DomainError("Hamiltonian is not Hermitian")
    try:
        E, V = np.linalg.eigh(hq)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    V = V.astype(hq.dtype, copy=True)
    start = 0
    while start < E.size:
        stop = start + 1
        while stop < E.size and E[stop] - E[stop - 1] < DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            V[:, start:stop] = _canonical_block(V[:, start:stop])
        start = stop
    rows = np.array([sign_fix(V[:, i]) for i in range(E.size)])
    if np.isrealobj(hq):
        rows = rows.real
    return ElectronicEigenbasis(E, rows)


def participation_ratio(v: np.ndarray) -> float:
    p = np.abs(v) ** 2
    p = p / p.sum()
    return float(1.0 / np.sum(p**2))


def holstein_vqc(occupations, z, params: ModelParams):
    """Mean Holstein energy sum_n g sqrt(2 w^3) <n_n> q_n and its gradient d/d conj(z_n).

    ``z`` are physical-basis complex coordinates with h_n = omega.
    """
    occ = np.asarray(occupations, dtype=float)
    z = np.asarray(getattr(z, "z", z), dtype=complex)
    q = (z + z.conj()).real / math.sqrt(2.0 * params.mass * params.omega)
    energy = float(params.coupling * np.sum(occ * q))
    grad = (params.coupling / math.sqrt(2.0 * params.mass * params.omega)) * occ
    return energy, grad.astype(complex)


def site_basis(params: ModelParams) -> UnitaryBasis:
    return UnitaryBasis(np.eye(params.N), np.arange(params.N), kind="site")


def fourier_basis(params: ModelParams) -> UnitaryBasis:
    """Fourier rows carrying the pristine band energies -2J cos k."""
    F = build_fourier(params.N)
    return UnitaryBasis(F.matrix, F.labels, "k", -2.0 * params.J * np.cos(F.labels))


def eigen_basis(params: ModelParams) -> UnitaryBasis:
    return electronic_eigenbasis(build_hq(params)).as_basis()


def truncation_mask(basis: UnitaryBasis, ecut=None, kcut=None, keep_fraction=None) -> np.ndarray:
    """Row indices of ``basis`` retained by exactly one cutoff rule.

    ``ecut`` keeps E <= E_c, ``kcut`` keeps |k| <= k0 and ``keep_fraction`` keeps
    the ceil(f M) lowest-|k| (Fourier rows) or lowest-energy rows.  Ties go to
    the lower row index.
    """
    given = [r for r in (ecut, kcut, keep_fraction) if r is not None]
    if len(given) != 1:
        raise DomainError("exactly one truncation rule required")
    M = basis.n_states
    if ecut is not None:
        if basis.energies is None:
            raise DomainError(f"energy cutoff needs row energies; {basis.kind!r} basis has none")
        return np.flatnonzero(basis.energies <= ecut + 1e-12)
    if kcut is not None:
        if basis.kind != "k":
            raise DomainError(f"wavevector cutoff needs a Fourier basis, got {basis.kind!r}")
        return np.flatnonzero(np.abs(basis.labels) <= kcut + 1e-12)
    f = float(keep_fraction)
    if not 0.0 < f <= 1.0:
        raise DomainError("keep fraction must lie in (0, 1]")
    if basis.kind == "k":
        key = np.abs(basis.labels)
    elif basis.energies is not None:
        key = basis.energies
    else:
        raise DomainError(f"keep-fraction rule needs wavevectors or energies, {basis.kind!r} basis has neither")
    n_keep = math.ceil(f * M - 1e-9)
    order = np.lexsort((np.arange(M), np.round(key, 10)))
    return np.sort(order[:n_keep])


def initial_wavefunction(N: int) -> np.ndarray:
    """Zero-momentum single-carrier state N^{-1/2} sum_n |n>."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return np.full(N, 1.0 / math.sqrt(N), dtype=complex)
