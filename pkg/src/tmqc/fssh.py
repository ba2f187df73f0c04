"""Fewest-switches surface hopping in transformed coordinates, plus mean-field forces."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .classical import HKernel
from .coords import CoordinateMap, UnitaryBasis
from .quantum import Adiabatic, QuantumFrame

log = logging.getLogger(__name__)

NEAR_DEGENERATE = 1e-10
SMALL_COUPLING = 1e-14


@dataclass(frozen=True)
class HopEvent:
    time: float
    source: int
    target: int
    gamma: float
    accepted: bool
    residual: float = 0.0

    @property
    def outcome(self) -> str:
        return "accepted" if self.accepted else "frustrated"


@dataclass(frozen=True, eq=False)
class CouplingVector:
    """D[xi] = <a~| d/d conj(z_xi) |b~> and its physical counterpart c[n] = <a~| d/dq_n |b~>."""

    D: np.ndarray
    c: np.ndarray


def time_derivative_coupling(prev: Adiabatic, cur: Adiabatic, dt: float) -> np.ndarray:
    """T[a, b] ~ <a|d b/dt> from overlaps of phase-aligned eigenvectors at t and t + dt."""
    S = prev.vectors.conj().T @ cur.vectors
    T = (S - S.conj().T) / (2.0 * dt)
    np.fill_diagonal(T, 0.0)
    return T


def hop_probabilities(T: np.ndarray, A: np.ndarray, active: int, dt: float) -> np.ndarray:
    """Switching probabilities out of ``active``; entry ``active`` holds the stay probability."""
    M = A.size
    P = np.zeros(M)
    Aa = A[active]
    if abs(Aa) < 1e-14:
        log.debug("active-surface coefficient vanishes; no hops this step")
        P[active] = 1.0
        return P
    P = np.maximum(0.0, 2.0 * (T[active] * A / Aa).real * dt)
    P[active] = 0.0
    total = P.sum()
    if total > 1.0:
        log.debug("hop probabilities sum to %.3f > 1; renormalizing", total)
        P /= total
        total = 1.0
    P[active] = max(0.0, 1.0 - total)
    return P


def select_hop(probabilities: np.ndarray, active: int, u: float) -> Optional[int]:
    """Walk the cumulative switching probabilities (skipping ``active``) with a uniform draw ``u``."""
    acc = 0.0
    for b, p in enumerate(probabilities):
        if b == active or p <= 0.0:
            continue
        acc += p
        if u < acc:
            return b
    return None


def hellmann_feynman_coupling(alpha_t: np.ndarray, beta_t: np.ndarray, eps_alpha: float, eps_beta: float,
                              coupling: float, cmap: CoordinateMap,
                              classical_basis: Optional[UnitaryBasis] = None) -> CouplingVector:
    """Nonadiabatic coupling for a Holstein (site-diagonal, linear) interaction.

    ``alpha_t`` and ``beta_t`` are real-projected eigenvectors in the physical
    basis.  c_n = coupling * a_n b_n / (eps_b - eps_a); since eigenvectors depend
    on positions only, d/d conj(z_n) = (1 / sqrt(2 m h)) d/dq_n.
    """
    gap = eps_beta - eps_alpha
    N = alpha_t.size
    if abs(gap) < NEAR_DEGENERATE:
        log.info("near-degenerate pair (gap %.2e); coupling set to zero", gap)
        c = np.zeros(N)
    else:
        c = coupling * alpha_t * beta_t / gap
    Dn = 0.5 * cmap.q_scale * c
    D = Dn.astype(complex) if classical_basis is None else classical_basis.matrix @ Dn
    return CouplingVector(D, c)


def rescale(z: np.ndarray, eps_alpha: float, eps_beta: float, coupling: CouplingVector, kernel: HKernel,
            reverse_frustrated: bool = False):
    """Shift z -> z - i gamma D so that eps + classical energy is unchanged.

    The classical energy along the shift is a quadratic a gamma^2 + b gamma + H(z)
    in gamma.  Returns (z', gamma, accepted); the root of smaller |gamma| is
    taken and a negative discriminant gives a frustrated hop with z unchanged
    (or, with ``reverse_frustrated``, reflected along D at constant energy).
    """
    w = -1j * coupling.D
    gap = eps_beta - eps_alpha
    a = kernel.quadratic(w)
    if math.sqrt(max(a, 0.0)) < SMALL_COUPLING or np.linalg.norm(coupling.D) < SMALL_COUPLING:
        if gap == 0.0:
            return z.copy(), 0.0, True
        log.info("no coupling direction for rescaling; hop frustrated")
        return z.copy(), 0.0, False
    b = kernel.quadratic(z + w) - kernel.quadratic(z) - a
    disc = b * b - 4.0 * a * gap
    if disc < 0.0:
        if reverse_frustrated:
            g = -b / a
            return z + g * w, g, False
        return z.copy(), 0.0, False
    if gap == 0.0:
        return z.copy(), 0.0, True
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [gap / qq] if qq != 0.0 else []
    roots.append(qq / a)
    gamma = min(roots, key=abs)
    return z + gamma * w, float(gamma), True


def ehrenfest_force_expectation(psi: np.ndarray, frame: QuantumFrame) -> np.ndarray:
    """Site occupations |<n|psi>|^2 that set the mean-field Holstein force."""
    return frame.site_density(psi)


def fssh_force_expectation(active: int, adiabatic: Adiabatic, frame: QuantumFrame) -> np.ndarray:
    """Site occupations of the active instantaneous eigenstate."""
    return frame.site_density(adiabatic.vectors[:, active])
