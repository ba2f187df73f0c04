"""Boltzmann sampling, the coupled quantum-classical time loop and ensemble averaging.

Per-trajectory random streams come from ``SeedSequence(master_seed,
spawn_key=(trajectory_index,))``: each trajectory draws 2N normals for its
initial (q, p), one uniform for the initial active surface and then exactly one
uniform per time step for the hop test, whether or not a hop is possible.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from typing import Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .classical import HKernel, InBasis, LinearPotential
from .coords import CanonicalState, UnitaryBasis, apply_mask, load_basis, to_complex
from .errors import DimensionError, DomainError, NumericError
from .fssh import (HopEvent, hellmann_feynman_coupling, hop_probabilities, rescale, select_hop,
                   time_derivative_coupling)
from .model import (ModelParams, build_hq, eigen_basis, fourier_basis, initial_wavefunction, site_basis,
                    truncation_mask)
from .quantum import QuantumFrame, adiabatic_decompose, eigvec_single, real_project, renormalize

log = logging.getLogger(__name__)

METHODS = ("fssh", "ehrenfest")
BASES = ("site", "fourier", "eigen", "file")
TARGETS = ("P_n", "P_k", "P_i")


@dataclass(frozen=True)
class RunConfig:
    # model
    N: int = 30
    J: float = 1.0
    delta: float = 0.0
    impurity_site: Optional[int] = None
    omega: float = 0.2
    g: float = 1.0
    T: float = 1.0
    mass: float = 1.0
    # method and representation
    method: str = "fssh"
    basis: str = "site"
    classical_basis: Optional[str] = None
    basis_file: Optional[str] = None
    truncate_frac: Optional[float] = None
    ecut: Optional[float] = None
    kcut: Optional[float] = None
    # integration and sampling
    dt: float = 0.005
    t_max: float = 30.0
    output_every: float = 0.05
    n_traj: int = 2000
    seed: int = 0
    reverse_frustrated: bool = False
    norm_tol: float = 1e-12

    def __post_init__(self):
        if self.impurity_site is None:
            object.__setattr__(self, "impurity_site", self.N // 2)
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}")
        for b in (self.basis, self.classical_basis):
            if b is not None and b not in BASES:
                raise DomainError(f"basis must be one of {BASES}")
        if "file" in (self.basis, self.classical_basis) and not self.basis_file:
            raise DomainError("basis 'file' needs basis_file")
        if not self.dt > 0 or self.t_max < self.dt:
            raise DomainError("need dt > 0 and t_max >= dt")
        if self.n_traj < 1:
            raise DomainError("n_traj must be >= 1")
        if self.output_every < self.dt:
            raise DomainError("output_every must be >= dt")
        ratio = self.output_every / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise DomainError("output_every must be a whole multiple of dt")
        rules = [r for r in (self.truncate_frac, self.ecut, self.kcut) if r is not None]
        if len(rules) > 1:
            raise DomainError("at most one of truncate_frac, ecut, kcut")
        if self.truncate_frac is not None and not 0.0 <= self.truncate_frac < 1.0:
            raise DomainError("truncate_frac must lie in [0, 1)")
        self.params  # validates the model block

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.N, self.J, self.delta, self.impurity_site, self.omega, self.g, self.T, self.mass)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def stride(self) -> int:
        return max(1, int(round(self.output_every / self.dt)))

    def replace(self, **changes) -> "RunConfig":
        d = asdict(self)
        d.update(changes)
        return RunConfig(**d)

    def truncation_kwargs(self) -> Optional[dict]:
        if self.ecut is not None:
            return {"ecut": self.ecut}
        if self.kcut is not None:
            return {"kcut": self.kcut}
        if self.truncate_frac:
            return {"keep_fraction": 1.0 - self.truncate_frac}
        return None


def trajectory_rng(master_seed: int, traj_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(traj_index,))))


def sample_boltzmann(params: ModelParams, rng: np.random.Generator) -> CanonicalState:
    """Independent classical Boltzmann draws for identical harmonic modes.

    q_n ~ Normal(0, T / (m w^2)), p_n ~ Normal(0, m T); q is drawn first.
    """
    N = params.N
    sq = math.sqrt(params.T / (params.mass * params.omega**2))
    sp = math.sqrt(params.mass * params.T)
    q = rng.standard_normal(N) * sq
    p = rng.standard_normal(N) * sp
    return CanonicalState(q, p, np.full(N, params.mass))


def named_basis(name: str, params: ModelParams, basis_file: Optional[str] = None) -> UnitaryBasis:
    if name == "site":
        return site_basis(params)
    if name == "fourier":
        return fourier_basis(params)
    if name == "eigen":
        return eigen_basis(params)
    if name == "file":
        b = load_basis(basis_file)
        if b.n_sites != params.N:
            raise DimensionError(f"basis file acts on {b.n_sites} sites, model has {params.N}")
        return b
    raise DomainError(f"unknown basis {name!r}")


@dataclass(eq=False)
class MQCSystem:
    """Everything a trajectory needs that does not depend on the random draw."""

    config: RunConfig
    params: ModelParams
    qbasis: UnitaryBasis
    cbasis: UnitaryBasis
    frame: QuantumFrame
    kernel: HKernel
    chains: dict  # target name -> (N x M_q) physical-target <- working map
    target_names: dict  # target name -> column names
    psi0: np.ndarray
    retained_weight: float

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "MQCSystem":
        params = cfg.params
        qfull = named_basis(cfg.basis, params, cfg.basis_file)
        cname = cfg.classical_basis or cfg.basis
        cfull = qfull if cname == cfg.basis else named_basis(cname, params, cfg.basis_file)
        rule = cfg.truncation_kwargs()
        qbasis = apply_mask(qfull, truncation_mask(qfull, **rule)) if rule else qfull
        cbasis = apply_mask(cfull, truncation_mask(cfull, **rule)) if rule else cfull
        frame = QuantumFrame.build(build_hq(params), qbasis, params.coupling)
        cmap = params.coordinate_map()
        kernel = HKernel.harmonic(cbasis, cmap, params.omega)
        targets = {"P_n": site_basis(params), "P_k": fourier_basis(params), "P_i": eigen_basis(params)}
        back = frame.smap.conj().T
        chains = {name: b.matrix.conj() @ back for name, b in targets.items()}
        names = {name: b.row_names() for name, b in targets.items()}
        psi0 = frame.smap @ initial_wavefunction(params.N)
        if np.isrealobj(frame.hq):
            psi0 = psi0.astype(complex)
        weight = float(np.vdot(psi0, psi0).real)
        if weight < 1e-12:
            raise DomainError("initial state has no weight in the retained quantum basis")
        return cls(cfg, params, qbasis, cbasis, frame, kernel, chains, names, psi0 / math.sqrt(weight), weight)

    @property
    def working_names(self) -> list:
        return self.qbasis.row_names()

    def __post_init__(self):
        self._readback = self.cbasis.matrix.conj().T.copy()
        self._q_scale = math.sqrt(2.0 / (self.params.mass * self.params.omega))

    def positions(self, z: np.ndarray) -> np.ndarray:
        """Physical positions reconstructed from working classical coordinates."""
        return self._q_scale * (self._readback @ z).real

    def holstein(self, occupations: np.ndarray) -> InBasis:
        return InBasis(LinearPotential(self.params.coordinate_map(), self.params.coupling * occupations),
                       self.cbasis)

    def initial_coords(self, state: CanonicalState) -> np.ndarray:
        return self.cbasis.matrix @ to_complex(state, self.params.coordinate_map()).z


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    tables: dict  # "populations" plus TARGETS -> (n_out, n_cols)
    energies: np.ndarray  # (n_out, 3): classical, quantum, total
    leakage: np.ndarray
    hops: list = field(default_factory=list)
    max_norm_drift: float = 0.0
    n_renormalized: int = 0


def _occupations_fssh(system: MQCSystem, H: np.ndarray, active: int) -> np.ndarray:
    return system.frame.site_density(eigvec_single(H, active))


def run_trajectory(system: MQCSystem, traj_index: int) -> TrajectoryRecord:
    """Propagate one trajectory and record observables at the output cadence.

    Each step: RK4 co-step of (z, psi) with the method's mean force evaluated at
    every stage, then (FSSH) re-diagonalise with phase alignment, compute the
    time-derivative coupling, draw once and rescale on an accepted switch.
    """
    cfg = system.config
    params = system.params
    frame = system.frame
    kernel = system.kernel
    fssh = cfg.method == "fssh"
    dt = cfg.dt
    rng = trajectory_rng(cfg.seed, traj_index)
    cmap = params.coordinate_map()
    Uc = system.cbasis.matrix
    grad_scale = params.coupling * 0.5 * cmap.q_scale

    z = system.initial_coords(sample_boltzmann(params, rng))
    psi = system.psi0.copy()
    H = frame.total(system.positions(z))
    ad = adiabatic_decompose(H, psi)
    active = -1
    if fssh:
        w = np.abs(ad.coeffs) ** 2
        active = int(min(np.searchsorted(np.cumsum(w / w.sum()), rng.random(), side="right"), w.size - 1))

    def force_rhs(zs, occ):
        # harmonic part from the kernel; Holstein part through the chain rule
        return kernel.rhs(zs) - 1j * (Uc @ (grad_scale * occ))

    n_steps, stride = cfg.n_steps, cfg.stride
    n_out = n_steps // stride + 1
    names = ["populations", *TARGETS]
    widths = {"populations": frame.size, **{k: params.N for k in TARGETS}}
    tables = {k: np.empty((n_out, widths[k])) for k in names}
    energies = np.empty((n_out, 3))
    leakage = np.empty(n_out)
    times = np.arange(n_out) * stride * dt
    hops: list[HopEvent] = []
    max_drift = 0.0
    n_renorm = 0
    weight = system.retained_weight

    def record(slot):
        if fssh:
            C = ad.vectors
            A = ad.coeffs
            Aw = np.abs(A) ** 2
            pops = {}
            for name in names:
                chain = C if name == "populations" else system.chains[name] @ C
                cA = chain @ A
                pops[name] = (cA * cA.conj()).real - (np.abs(chain) ** 2) @ Aw + np.abs(chain[:, active]) ** 2
            e_q = ad.energies[active]
        else:
            pops = {}
            for name in names:
                amp = psi if name == "populations" else system.chains[name] @ psi
                pops[name] = (amp * amp.conj()).real
            e_q = float(np.vdot(psi, H @ psi).real)
        for name in names:
            tables[name][slot] = weight * pops[name]
        e_c = kernel.quadratic(z)
        energies[slot] = (e_c, e_q, e_c + e_q)
        leakage[slot] = 1.0 - tables["populations"][slot].sum()

    record(0)
    for step in range(1, n_steps + 1):
        t = step * dt
        # --- RK4 co-step; stage 1 reuses H and eigenvectors at the current z
        occ1 = frame.site_density(ad.vectors[:, active]) if fssh else frame.site_density(psi)
        k1z = force_rhs(z, occ1)
        k1p = -1j * (H @ psi)
        z2, p2 = z + 0.5 * dt * k1z, psi + 0.5 * dt * k1p
        H2 = frame.total(system.positions(z2))
        occ2 = _occupations_fssh(system, H2, active) if fssh else frame.site_density(p2)
        k2z, k2p = force_rhs(z2, occ2), -1j * (H2 @ p2)
        z3, p3 = z + 0.5 * dt * k2z, psi + 0.5 * dt * k2p
        H3 = frame.total(system.positions(z3))
        occ3 = _occupations_fssh(system, H3, active) if fssh else frame.site_density(p3)
        k3z, k3p = force_rhs(z3, occ3), -1j * (H3 @ p3)
        z4, p4 = z + dt * k3z, psi + dt * k3p
        H4 = frame.total(system.positions(z4))
        occ4 = _occupations_fssh(system, H4, active) if fssh else frame.site_density(p4)
        k4z, k4p = force_rhs(z4, occ4), -1j * (H4 @ p4)
        z = z + (dt / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        psi = psi + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        psi, drift = renormalize(psi, cfg.norm_tol)
        max_drift = max(max_drift, abs(drift))
        if abs(drift) > cfg.norm_tol:
            n_renorm += 1

        H = frame.total(system.positions(z))
        if fssh:
            ad_new = adiabatic_decompose(H, psi, prev=ad)
            T = time_derivative_coupling(ad, ad_new, dt)
            probs = hop_probabilities(T, ad_new.coeffs, active, dt)
            target = select_hop(probs, active, rng.random())
            ad = ad_new
            if target is not None:
                z, active, ad, H, event = _attempt_hop(system, z, psi, ad, H, active, target, t)
                hops.append(event)

        if step % stride == 0:
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(psi))):
                raise NumericError(f"trajectory {traj_index} diverged at t={t:.3f}")
            record(step // stride)

    return TrajectoryRecord(times, tables, energies, leakage, hops, max_drift, n_renorm)


def _attempt_hop(system: MQCSystem, z, psi, ad, H, active, target, t):
    frame = system.frame
    kernel = system.kernel
    params = system.params
    ea, eb = ad.energies[active], ad.energies[target]
    a_t = real_project(frame.to_physical(ad.vectors[:, active]))
    b_t = real_project(frame.to_physical(ad.vectors[:, target]))
    cv = hellmann_feynman_coupling(a_t, b_t, ea, eb, params.coupling, params.coordinate_map(), system.cbasis)
    z_new, gamma, ok = rescale(z, ea, eb, cv, kernel, system.config.reverse_frustrated)
    if not ok:
        if system.config.reverse_frustrated and gamma != 0.0:
            z = z_new
            H = frame.total(system.positions(z))
            ad = adiabatic_decompose(H, psi, prev=ad)
        return z, active, ad, H, HopEvent(t, active, target, gamma, False, 0.0)
    before = kernel.quadratic(z) + ea
    H = frame.total(system.positions(z_new))
    ad = adiabatic_decompose(H, psi, prev=ad)
    residual = kernel.quadratic(z_new) + ad.energies[target] - before
    if abs(residual) > 1e-9:
        log.warning("hop at t=%.3f leaves energy residual %.2e", t, residual)
    return z_new, target, ad, H, HopEvent(t, active, target, gamma, True, float(residual))


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleObservables:
    config: RunConfig
    times: np.ndarray
    column_names: dict  # table -> list of column names
    mean: dict  # table -> (n_out, n_cols); "energies" and "leakage" included
    sem: dict
    n_traj: int
    n_failed: int = 0
    failures: list = field(default_factory=list)
    hops: list = field(default_factory=list)  # (traj_index, HopEvent) when hop_log
    n_accepted: int = 0
    n_frustrated: int = 0
    max_norm_drift: float = 0.0

    @property
    def ok(self) -> bool:
        return self.n_failed == 0


class _Accumulator:
    def __init__(self):
        self.s = {}
        self.ss = {}
        self.n = 0

    def add(self, arrays: dict):
        for k, v in arrays.items():
            if k in self.s:
                self.s[k] = self.s[k] + v
                self.ss[k] = self.ss[k] + v * v
            else:
                self.s[k] = v.copy()
                self.ss[k] = v * v
        self.n += 1

    def finish(self):
        mean, sem = {}, {}
        n = self.n
        for k in self.s:
            m = self.s[k] / n
            mean[k] = m
            if n > 1:
                var = np.maximum(self.ss[k] / n - m * m, 0.0) * n / (n - 1)
                sem[k] = np.sqrt(var / n)
            else:
                sem[k] = np.zeros_like(m)
        return mean, sem


_WORKER_SYSTEM: Optional[MQCSystem] = None


def _init_worker(cfg: RunConfig):
    global _WORKER_SYSTEM
    threadpool_limits(1)
    _WORKER_SYSTEM = MQCSystem.from_config(cfg)


def _run_one(idx: int):
    try:
        return idx, run_trajectory(_WORKER_SYSTEM, idx), None
    except (NumericError, FloatingPointError) as exc:
        return idx, None, str(exc)


def run_ensemble(cfg: RunConfig, workers: int = 1, hop_log: bool = False,
                 progress: Optional[Callable[[int, int], None]] = None) -> EnsembleObservables:
    """Average ``cfg.n_traj`` trajectories; results are reduced in index order.

    The reduction order is fixed, so output is bit-identical for any ``workers``.
    """
    system = MQCSystem.from_config(cfg)
    acc = _Accumulator()
    failures = []
    hops = []
    n_acc = n_fru = 0
    max_drift = 0.0
    times = None

    def consume(idx, rec, err):
        nonlocal n_acc, n_fru, max_drift, times
        if err is not None:
            log.error("trajectory %d failed: %s", idx, err)
            failures.append((idx, err))
            return
        times = rec.times
        arrays = dict(rec.tables)
        arrays["energies"] = rec.energies
        arrays["leakage"] = rec.leakage[:, None]
        acc.add(arrays)
        for ev in rec.hops:
            if ev.accepted:
                n_acc += 1
            else:
                n_fru += 1
            if hop_log:
                hops.append((idx, ev))
        max_drift = max(max_drift, rec.max_norm_drift)

    if workers <= 1:
        global _WORKER_SYSTEM
        with threadpool_limits(1):
            _WORKER_SYSTEM = system
            for i in range(cfg.n_traj):
                consume(*_run_one(i))
                if progress:
                    progress(i + 1, cfg.n_traj)
    else:
        chunk = max(1, min(16, cfg.n_traj // (4 * workers)))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg,)) as ex:
            for done, res in enumerate(ex.map(_run_one, range(cfg.n_traj), chunksize=chunk), 1):
                consume(*res)
                if progress:
                    progress(done, cfg.n_traj)

    if acc.n == 0:
        raise NumericError("every trajectory failed")
    mean, sem = acc.finish()
    columns = {"populations": system.working_names, **system.target_names,
               "energies": ["classical", "quantum", "total"], "leakage": ["leakage"]}
    return EnsembleObservables(cfg, times, columns, mean, sem, acc.n, len(failures), failures, hops,
                               n_acc, n_fru, max_drift)


def config_fields() -> list:
    return [f.name for f in fields(RunConfig)]
