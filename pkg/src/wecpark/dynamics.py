"""Frequency-domain array dynamics: impedance assembly, state solves, extracted
power, slamming statistics and the interaction factor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import NumericalError
from .hydro import DeviceGeometry, HydroDB, incident_amplitudes, excitation_forces
from .waves import DirectionSample, SpectralGrid, WaveClimate

DAMPING_FLOOR_DEFAULT = 1.0  # N s/m; keeps the impedance invertible


@dataclass(frozen=True)
class ControlVector:
    """Per-device generator damping c (N s/m) and stiffness s (N/m)."""

    damping: np.ndarray
    stiffness: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "damping", np.asarray(self.damping, dtype=float))
        object.__setattr__(self, "stiffness", np.asarray(self.stiffness, dtype=float))
        if self.damping.shape != self.stiffness.shape:
            raise ValueError("damping and stiffness must have equal length")

    @property
    def n_body(self) -> int:
        return self.damping.size

    def as_array(self) -> np.ndarray:
        """Flat layout [c_1..c_n, s_1..s_n]."""
        return np.concatenate([self.damping, self.stiffness])

    @staticmethod
    def from_array(u: np.ndarray) -> "ControlVector":
        u = np.asarray(u, dtype=float)
        if u.size % 2:
            raise ValueError("control array length must be even")
        n = u.size // 2
        return ControlVector(damping=u[:n].copy(), stiffness=u[n:].copy())


@dataclass(frozen=True)
class ArrayProblem:
    """A fully specified optimization instance: climate, grid, coefficients,
    devices and the slamming/admissibility parameters."""

    climate: WaveClimate
    grid: SpectralGrid
    db: HydroDB
    devices: tuple[DeviceGeometry, ...]
    alpha: float = 0.5
    damping_floor: float = DAMPING_FLOOR_DEFAULT
    positive_stiffness: bool = False

    def __post_init__(self):
        if self.db.n_body != len(self.devices):
            raise ValueError("hydro database and device list disagree on body count")
        if self.db.n_freq != self.grid.n_freq:
            raise ValueError("hydro database and grid disagree on frequency count")

    @property
    def n_body(self) -> int:
        return len(self.devices)

    @property
    def mass(self) -> np.ndarray:
        return np.array([d.mass for d in self.devices])

    @property
    def static_stiffness(self) -> np.ndarray:
        return np.array([d.stiffness for d in self.devices])

    @property
    def draft(self) -> np.ndarray:
        return np.array([d.draft for d in self.devices])

    def is_admissible(self, u: ControlVector) -> bool:
        if np.any(u.damping < self.damping_floor):
            return False
        if self.positive_stiffness and np.any(u.stiffness < 0):
            return False
        return True


@dataclass
class StateSolution:
    """Heave amplitudes for every harmonic plus the forcing that produced them.

    The assembled impedance matrices are kept so the adjoint solve can reuse
    them through the conjugate transpose without reassembly.
    """

    amplitudes: np.ndarray  # (n_freq, n_body) complex
    forces: np.ndarray
    direction: DirectionSample
    impedances: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class ConstraintReport:
    """Per-device slamming statistics derived from the relative motion w."""

    w_rms: np.ndarray
    g: np.ndarray
    h: np.ndarray
    time_above: np.ndarray
    peak_fraction: np.ndarray
    alpha: float


def assemble_impedances(problem: ArrayProblem, u: ControlVector) -> np.ndarray:
    """All impedance matrices, shape (n_freq, n_body, n_body).

    Z_q = -w_q^2 (M + A_q) - i w_q (C + B_q) + (K + S), with M, C, K, S diagonal.
    """
    w = problem.grid.omega[:, None, None]
    m_diag = np.diag(problem.mass)[None, :, :]
    c_diag = np.diag(u.damping)[None, :, :]
    ks_diag = np.diag(problem.static_stiffness + u.stiffness)[None, :, :]
    return (-(w**2) * (m_diag + problem.db.added_mass)
            - 1j * w * (c_diag + problem.db.radiation_damping)
            + ks_diag)


def assemble_impedance(problem: ArrayProblem, u: ControlVector, q: int) -> np.ndarray:
    """Impedance matrix of harmonic q."""
    w = problem.grid.omega[q]
    return (-(w**2) * (np.diag(problem.mass) + problem.db.added_mass[q])
            - 1j * w * (np.diag(u.damping) + problem.db.radiation_damping[q])
            + np.diag(problem.static_stiffness + u.stiffness))


def solve_state(problem: ArrayProblem, u: ControlVector,
                direction: DirectionSample) -> StateSolution:
    """Solve Z_q zeta_q = F_q for every harmonic (batched dense LU)."""
    forces = excitation_forces(problem.db, problem.devices, problem.grid, direction)
    z = assemble_impedances(problem, u)
    try:
        amplitudes = np.linalg.solve(z, forces[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular impedance system "
                             "(inadmissible controls or corrupt coefficients)"
                             ) from exc
    if not np.all(np.isfinite(amplitudes)):
        raise NumericalError("non-finite state solution")
    return StateSolution(amplitudes=amplitudes, forces=forces,
                         direction=direction, impedances=z)


def state_residual(problem: ArrayProblem, u: ControlVector,
                   sol: StateSolution) -> float:
    """Max relative residual ||Z zeta - F|| / ||F|| over harmonics."""
    z = assemble_impedances(problem, u)  # reassembled, independent of the solve
    resid = np.einsum("qij,qj->qi", z, sol.amplitudes) - sol.forces
    num = np.linalg.norm(resid, axis=1)
    den = np.maximum(np.linalg.norm(sol.forces, axis=1), 1e-300)
    return float(np.max(num / den))


def power(problem: ArrayProblem, u: ControlVector,
          sol: StateSolution) -> tuple[float, np.ndarray]:
    """Cost J (negative mean extracted power, W) and per-device powers.

    J = -1/2 sum_q w_q^2 zeta_q^H C zeta_q; P_l = 1/2 sum_q w_q^2 c_l |zeta_ql|^2.
    """
    w2 = problem.grid.omega**2
    per_device = 0.5 * (w2[:, None] * np.abs(sol.amplitudes) ** 2).sum(axis=0) \
        * u.damping
    return float(-per_device.sum()), per_device


def relative_motion_sumsq(problem: ArrayProblem, sol: StateSolution) -> np.ndarray:
    """sum_q |zeta_ql - eta_ql|^2 per device (m^2)."""
    eta = incident_amplitudes(problem.devices, problem.grid, sol.direction)
    return (np.abs(sol.amplitudes - eta) ** 2).sum(axis=0)


def constraint_values(problem: ArrayProblem, sol: StateSolution) -> np.ndarray:
    """Slamming constraint g_l = sum_q |zeta - eta|^2 - 2 alpha^2 d_l^2."""
    return relative_motion_sumsq(problem, sol) \
        - 2.0 * problem.alpha**2 * problem.draft**2


def penalty_terms(problem: ArrayProblem, sol: StateSolution) -> np.ndarray:
    """h_l = max(g_l, 0)^2, the squared positive part of the constraint."""
    g = constraint_values(problem, sol)
    return np.maximum(g, 0.0) ** 2


def slamming_report(problem: ArrayProblem, sol: StateSolution) -> ConstraintReport:
    """Constraint functions plus Gaussian exceedance statistics.

    time above threshold t_at = 2 [1 - Phi(d / w_rms)]; narrow-band peak
    exceedance bound Q = exp(-d^2 / (2 w_rms^2)).
    """
    sumsq = relative_motion_sumsq(problem, sol)
    d = problem.draft
    w_rms = np.sqrt(0.5 * sumsq)
    g = sumsq - 2.0 * problem.alpha**2 * d**2
    h = np.maximum(g, 0.0) ** 2
    with np.errstate(divide="ignore"):
        ratio = np.where(w_rms > 0, d / np.where(w_rms > 0, w_rms, 1.0), np.inf)
    t_at = 2.0 * (1.0 - ndtr(ratio))
    peak = np.where(np.isinf(ratio), 0.0, np.exp(-0.5 * ratio**2))
    return ConstraintReport(w_rms=w_rms, g=g, h=h, time_above=t_at,
                            peak_fraction=peak, alpha=problem.alpha)


def interaction_factor(per_device_powers, p_isolated: float) -> float:
    """Array power divided by body count times the isolated-device power."""
    if p_isolated <= 0:
        raise ValueError(f"isolated power must be > 0, got {p_isolated}")
    per_device_powers = np.asarray(per_device_powers, dtype=float)
    return float(per_device_powers.sum() / (per_device_powers.size * p_isolated))
