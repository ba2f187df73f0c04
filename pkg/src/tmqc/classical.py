"""Classical Hamiltonian and equations of motion in transformed complex coordinates.

With z_xi = sum_n U[xi, n] z_n, the kinetic energy sum_n p_n^2 / 2 m_n becomes

    K = -1/4 sum_{xi xi'} ( conj(ht)[xi, xi'] z_xi z_xi'
                            - 2 h[xi, xi'] z_xi conj(z_xi')
                            + ht[xi, xi'] conj(z_xi) conj(z_xi') )

with h = conj(U) diag(h_n) U^T and ht = U diag(h_n) U^T.  A harmonic potential
sum_n m_n w_n^2 q_n^2 / 2 has the same structure with s_n = w_n^2 / h_n and the
opposite sign on the non-Hermitian part, so it is folded into the kernel as a
"spring".  Everything else enters through a :class:`PotentialFn`.  Equations of
motion are dz_xi/dt = -i dH/d conj(z_xi).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coords import ComplexCoords, CoordinateMap, UnitaryBasis
from .errors import DimensionError, NumericError

IMAG_RESIDUE_TOL = 1e-12


def _zarr(z) -> np.ndarray:
    if isinstance(z, ComplexCoords):
        return z.z
    return np.asarray(z, dtype=complex)


def _wrap_like(template, z: np.ndarray):
    if isinstance(template, ComplexCoords):
        return ComplexCoords(z, template.basis)
    return z


@dataclass(frozen=True, eq=False)
class HKernel:
    h_mat: np.ndarray
    h_tilde: np.ndarray
    spring_mat: np.ndarray
    spring_tilde: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.h_mat, self.h_tilde, self.spring_mat, self.spring_tilde)}
        if len(shapes) != 1:
            raise DimensionError("kernel blocks differ in shape")
        hs = self.h_mat + self.spring_mat
        dt = self.spring_tilde - self.h_tilde
        # d/dz* of the quadratic form is lin @ z + anti @ conj(z)
        object.__setattr__(self, "_lin", 0.5 * hs.conj())
        object.__setattr__(self, "_anti", 0.5 * dt)
        object.__setattr__(self, "_hs", hs)
        object.__setattr__(self, "_has_anti", bool(np.abs(dt).max(initial=0.0) > 1e-14))

    @classmethod
    def from_basis(cls, basis: Optional[UnitaryBasis], h, spring=None) -> "HKernel":
        """Kernel for scaling frequencies ``h`` and optional spring constants ``spring``.

        ``spring[n]`` is w_n^2 / h_n for a harmonic potential m w_n^2 q_n^2 / 2.
        """
        h = np.asarray(h, dtype=float)
        U = np.eye(h.size) if basis is None else basis.matrix
        if U.shape[1] != h.size:
            raise DimensionError("basis and h differ in physical dimension")
        s = np.zeros_like(h) if spring is None else np.broadcast_to(np.asarray(spring, float), h.shape)
        Uc = U.conj()
        return cls(
            h_mat=(Uc * h) @ U.T,
            h_tilde=(U * h) @ U.T,
            spring_mat=(Uc * s) @ U.T,
            spring_tilde=(U * s) @ U.T,
        )

    @classmethod
    def harmonic(cls, basis: Optional[UnitaryBasis], cmap: CoordinateMap, omega) -> "HKernel":
        """Kinetic energy plus sum_n m w^2 q_n^2 / 2 folded into the kernel."""
        omega = np.broadcast_to(np.asarray(omega, float), cmap.h.shape)
        return cls.from_basis(basis, cmap.h, omega**2 / cmap.h)

    @property
    def size(self) -> int:
        return self.h_mat.shape[0]

    def quadratic(self, z) -> float:
        z = _zarr(z)
        if z.shape != (self.size,):
            raise DimensionError(f"kernel of size {self.size}, got {z.shape}")
        zc = z.conj()
        val = 0.25 * (
            z @ (self._anti.conj() @ z) * 2.0 + 2.0 * (z @ (self._hs @ zc)) + zc @ (self._anti @ zc) * 2.0
        )
        if abs(val.imag) > IMAG_RESIDUE_TOL * max(1.0, abs(val.real)):
            raise NumericError(f"quadratic form has imaginary residue {val.imag:.3e}; malformed kernel")
        return float(val.real)

    def rhs(self, z: np.ndarray) -> np.ndarray:
        out = self._lin @ z
        if self._has_anti:
            out = out + self._anti @ z.conj()
        return -1j * out


class PotentialFn:
    """V(z) and its Wirtinger gradient dV/d conj(z) on raw coordinate arrays."""

    def value(self, z: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: "PotentialFn") -> "PotentialFn":
        return SumPotential([self, other])


class ZeroPotential(PotentialFn):
    def value(self, z):
        return 0.0

    def grad(self, z):
        return np.zeros_like(np.asarray(z, dtype=complex))


class SumPotential(PotentialFn):
    def __init__(self, terms: Sequence[PotentialFn]):
        self.terms = list(terms)

    def value(self, z):
        return sum(t.value(z) for t in self.terms)

    def grad(self, z):
        return sum(t.grad(z) for t in self.terms)


class HarmonicPotential(PotentialFn):
    """sum_n m_n w_n^2 q_n^2 / 2 in physical coordinates."""

    def __init__(self, cmap: CoordinateMap, omega):
        self.cmap = cmap
        self.k = cmap.m * np.broadcast_to(np.asarray(omega, float), cmap.h.shape) ** 2

    def value(self, z):
        q = self.cmap.q_scale * z.real
        return float(0.5 * np.sum(self.k * q * q))

    def grad(self, z):
        q = self.cmap.q_scale * z.real
        return (0.5 * self.cmap.q_scale * self.k * q).astype(complex)


class QuarticPotential(PotentialFn):
    """sum_n c q_n^4 / 4; a test-only anharmonic example."""

    def __init__(self, cmap: CoordinateMap, c: float):
        self.cmap = cmap
        self.c = float(c)

    def value(self, z):
        q = self.cmap.q_scale * z.real
        return float(0.25 * self.c * np.sum(q**4))

    def grad(self, z):
        q = self.cmap.q_scale * z.real
        return (0.5 * self.cmap.q_scale * self.c * q**3).astype(complex)


class LinearPotential(PotentialFn):
    """sum_n w_n q_n; the Holstein mean force for fixed site occupations."""

    def __init__(self, cmap: CoordinateMap, weights):
        self.cmap = cmap
        self.weights = np.asarray(weights, dtype=float)
        self._grad = (0.5 * cmap.q_scale * self.weights).astype(complex)

    def value(self, z):
        return float(np.sum(self.weights * self.cmap.q_scale * z.real))

    def grad(self, z):
        return self._grad.copy()


class InBasis(PotentialFn):
    """Evaluate a physical-coordinate potential on transformed coordinates.

    z_n = U^dagger z_xi, and by the chain rule dV/d conj(z_xi) = U dV/d conj(z_n).
    """

    def __init__(self, potential: PotentialFn, basis: Optional[UnitaryBasis]):
        self.potential = potential
        self.basis = basis

    def _phys(self, z):
        if self.basis is None:
            return z
        return self.basis.matrix.conj().T @ z

    def value(self, z):
        return self.potential.value(self._phys(z))

    def grad(self, z):
        g = self.potential.grad(self._phys(z))
        if self.basis is None:
            return g
        return self.basis.matrix @ g


def classical_hamiltonian(z, kernel: HKernel, V: Optional[PotentialFn] = None) -> float:
    zz = _zarr(z)
    energy = kernel.quadratic(zz)
    if V is not None:
        energy += V.value(zz)
    return energy


def kinetic_spring_rhs(z, kernel: HKernel) -> np.ndarray:
    zz = _zarr(z)
    if zz.shape != (kernel.size,):
        raise DimensionError(f"kernel of size {kernel.size}, got {zz.shape}")
    return kernel.rhs(zz)


def eom_rhs(z, kernel: HKernel, V: Optional[PotentialFn] = None) -> np.ndarray:
    out = kinetic_spring_rhs(z, kernel)
    if V is not None:
        out = out - 1j * V.grad(_zarr(z))
    return out


def rk4_step(z, kernel: HKernel, V: Optional[PotentialFn], dt: float):
    """One classical RK4 step with a potential that is fixed over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    z0 = _zarr(z)
    k1 = eom_rhs(z0, kernel, V)
    k2 = eom_rhs(z0 + 0.5 * dt * k1, kernel, V)
    k3 = eom_rhs(z0 + 0.5 * dt * k2, kernel, V)
    k4 = eom_rhs(z0 + dt * k3, kernel, V)
    return _wrap_like(z, z0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
