"""Canonical <-> complex classical coordinates and unitary basis transforms.

A canonical pair (q_n, p_n) with mass m_n and scaling frequency h_n is mapped to

    z_n = sqrt(m_n h_n / 2) * (q_n + i p_n / (m_n h_n))

and a unitary basis with rows xi acts as z_xi = sum_n U[xi, n] z_n.  Truncated
bases keep a subset of rows; reading back to physical coordinates uses U^dagger,
i.e. the orthogonal projection onto the retained subspace.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError

LABEL_KINDS = ("site", "k", "eigen", "custom")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_positive(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} must be positive and finite")


@dataclass(frozen=True, eq=False)
class CanonicalState:
    q: np.ndarray
    p: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        q = _readonly(np.atleast_1d(self.q), float)
        p = _readonly(np.atleast_1d(self.p), float)
        m = _readonly(np.broadcast_to(self.m, q.shape), float)
        if q.ndim != 1 or q.size < 1 or p.shape != q.shape:
            raise DimensionError(f"q and p must be 1-d of equal length, got {q.shape} and {p.shape}")
        _check_positive("mass", m)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "m", m)

    def __len__(self):
        return self.q.size


@dataclass(frozen=True, eq=False)
class CoordinateMap:
    """Per-mode scaling frequencies h_n and masses m_n."""

    h: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        h = _readonly(np.atleast_1d(self.h), float)
        m = _readonly(np.broadcast_to(self.m, h.shape), float)
        _check_positive("h", h)
        _check_positive("mass", m)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "m", m)

    @classmethod
    def harmonic(cls, n_modes: int, omega: float, mass: float = 1.0) -> "CoordinateMap":
        """h_n = omega for every mode, which maps harmonic motion onto circles."""
        return cls(np.full(n_modes, float(omega)), np.full(n_modes, float(mass)))

    def __len__(self):
        return self.h.size

    @property
    def q_scale(self) -> np.ndarray:
        """q_n = q_scale_n * Re z_n."""
        return np.sqrt(2.0 / (self.m * self.h))

    @property
    def p_scale(self) -> np.ndarray:
        """p_n = p_scale_n * Im z_n."""
        return np.sqrt(2.0 * self.m * self.h)


@dataclass(frozen=True, eq=False)
class UnitaryBasis:
    """Rows of a (possibly truncated) unitary matrix.

    ``matrix[xi, n]`` is the weight of physical state n in transformed state xi.
    ``rows`` records which rows of the parent full basis were retained, so masks
    compose and populations can be scattered back onto the full label grid.
    """

    matrix: np.ndarray
    labels: np.ndarray
    kind: str = "custom"
    energies: Optional[np.ndarray] = None
    rows: Optional[np.ndarray] = None

    def __post_init__(self):
        U = _readonly(np.atleast_2d(self.matrix), complex)
        M, N = U.shape
        if M > N:
            raise DimensionError(f"basis has more rows ({M}) than physical states ({N})")
        labels = _readonly(self.labels, float)
        if labels.shape != (M,):
            raise DimensionError("one label per basis row required")
        if self.kind not in LABEL_KINDS:
            raise DomainError(f"unknown label kind {self.kind!r}")
        energies = None if self.energies is None else _readonly(self.energies, float)
        if energies is not None and energies.shape != (M,):
            raise DimensionError("one energy per basis row required")
        rows = np.arange(M) if self.rows is None else self.rows
        rows = _readonly(rows, int)
        if M and np.abs(U @ U.conj().T - np.eye(M)).max() > 1e-10:
            raise DomainError("basis rows are not orthonormal")
        object.__setattr__(self, "matrix", U)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "rows", rows)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_sites(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_full(self) -> bool:
        return self.n_states == self.n_sites

    @property
    def is_real(self) -> bool:
        return not np.any(self.matrix.imag)

    def projector(self) -> np.ndarray:
        """U^dagger U, the physical-space projector onto the retained rows."""
        return self.matrix.conj().T @ self.matrix

    def row_names(self) -> list[str]:
        """Stable column names used by the CSV writers."""
        if self.kind == "k":
            N = self.n_sites
            return [f"k{int(round(k * N / (2 * np.pi)))}" for k in self.labels]
        if self.kind == "eigen":
            return [f"i{int(lab)}" for lab in self.labels]
        if self.kind == "site":
            return [f"n{int(lab)}" for lab in self.labels]
        return [f"r{int(r)}" for r in self.rows]


@dataclass(frozen=True, eq=False)
class ComplexCoords:
    """Complex classical coordinates; ``basis=None`` means the physical basis."""

    z: np.ndarray
    basis: Optional[UnitaryBasis] = field(default=None)

    def __post_init__(self):
        z = _readonly(np.atleast_1d(self.z), complex)
        if self.basis is not None and z.shape != (self.basis.n_states,):
            raise DimensionError(f"{z.size} coordinates for a basis of {self.basis.n_states} rows")
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.z.size


def identity_basis(n: int) -> UnitaryBasis:
    if n < 1:
        raise DomainError("basis size must be >= 1")
    return UnitaryBasis(np.eye(n), np.arange(n), kind="site")


def fourier_wavevectors(n: int) -> np.ndarray:
    """k = 2 pi j / N with j = -floor(N/2), ..., ceil(N/2) - 1."""
    j = np.arange(-(n // 2), n - n // 2)
    return 2.0 * np.pi * j / n


def build_fourier(n: int) -> UnitaryBasis:
    """U[k, n] = exp(i k n) / sqrt(N), rows ordered by ascending k."""
    if n < 1:
        raise DomainError("N must be >= 1")
    k = fourier_wavevectors(n)
    U = np.exp(1j * np.outer(k, np.arange(n))) / np.sqrt(n)
    return UnitaryBasis(U, k, kind="k")


def apply_mask(basis: UnitaryBasis, keep: Sequence[int]) -> UnitaryBasis:
    """Row subset of ``basis``; ``keep`` indexes the rows of ``basis``."""
    keep = np.unique(np.asarray(keep, dtype=int))
    if keep.size == 0:
        raise DomainError("truncation keeps no basis rows")
    if keep[0] < 0 or keep[-1] >= basis.n_states:
        raise DimensionError("mask index out of range")
    energies = None if basis.energies is None else basis.energies[keep]
    return UnitaryBasis(basis.matrix[keep], basis.labels[keep], basis.kind, energies, basis.rows[keep])


def to_complex(state: CanonicalState, cmap: CoordinateMap) -> ComplexCoords:
    if len(state) != len(cmap):
        raise DimensionError("state and coordinate map differ in length")
    if not np.allclose(state.m, cmap.m, rtol=0, atol=0):
        raise DomainError("state and coordinate map disagree on masses")
    mh = cmap.m * cmap.h
    z = np.sqrt(mh / 2.0) * (state.q + 1j * state.p / mh)
    return ComplexCoords(z)


def from_complex(coords: ComplexCoords, cmap: CoordinateMap) -> CanonicalState:
    if coords.basis is not None:
        raise DomainError("coordinates must be in the physical basis; apply inverse_transform first")
    if len(coords) != len(cmap):
        raise DimensionError("coordinates and coordinate map differ in length")
    return CanonicalState(cmap.q_scale * coords.z.real, cmap.p_scale * coords.z.imag, cmap.m)


def transform(coords: ComplexCoords, basis: UnitaryBasis) -> ComplexCoords:
    if coords.basis is not None:
        raise DomainError("transform expects physical-basis coordinates")
    if len(coords) != basis.n_sites:
        raise DimensionError(f"basis acts on {basis.n_sites} states, got {len(coords)}")
    return ComplexCoords(basis.matrix @ coords.z, basis)


def inverse_transform(coords: ComplexCoords, basis: Optional[UnitaryBasis] = None) -> ComplexCoords:
    """Physical coordinates z_n = sum_xi conj(U[xi, n]) z_xi."""
    basis = coords.basis if basis is None else basis
    if basis is None:
        return coords
    if len(coords) != basis.n_states:
        raise DimensionError(f"basis has {basis.n_states} rows, got {len(coords)} coordinates")
    return ComplexCoords(basis.matrix.conj().T @ coords.z)


# ---------------------------------------------------------------------------
# text format: header "M N kind", optional "# labels:" / "# energies:" /
# "# rows:" comment lines, then M rows of 2N floats (re, im interleaved)


def save_basis(path, basis: UnitaryBasis) -> None:
    U = basis.matrix
    M, N = U.shape
    inter = np.empty((M, 2 * N))
    inter[:, 0::2] = U.real
    inter[:, 1::2] = U.imag
    lines = [f"{M} {N} {basis.kind}"]
    lines.append("# labels: " + " ".join(repr(float(x)) for x in basis.labels))
    if basis.energies is not None:
        lines.append("# energies: " + " ".join(repr(float(x)) for x in basis.energies))
    lines.append("# rows: " + " ".join(str(int(r)) for r in basis.rows))
    for row in inter:
        lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_basis(path) -> UnitaryBasis:
    header = None
    meta: dict[str, list[float]] = {}
    data = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].partition(":")
            if rest:
                meta[key.strip()] = [float(x) for x in rest.split()]
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 3:
                raise DomainError(f"bad basis header {line!r}")
            header = (int(parts[0]), int(parts[1]), parts[2])
            continue
        data.append([float(x) for x in line.split()])
    if header is None:
        raise DomainError("basis file has no header")
    M, N, kind = header
    arr = np.array(data, dtype=float).reshape(-1, 2 * N) if data else np.empty((0, 2 * N))
    if arr.shape != (M, 2 * N):
        raise DimensionError(f"expected {M} rows of {2 * N} floats, got {arr.shape}")
    U = arr[:, 0::2] + 1j * arr[:, 1::2]
    labels = meta.get("labels", list(range(M)))
    rows = [int(r) for r in meta["rows"]] if "rows" in meta else None
    return UnitaryBasis(U, labels, kind, meta.get("energies"), rows)
