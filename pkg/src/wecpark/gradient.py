"""Adjoint-based gradient of the penalized sample cost, plus the
finite-difference oracle used to verify it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


from .dynamics import (
    ArrayProblem,
    ControlVector,
    StateSolution,
    constraint_values,
    penalty_terms,
    power,
    solve_state,
)
from .errors import NumericalError
from .hydro import incident_amplitudes
from .waves import DirectionSample


@dataclass
class AdjointSolution:
    """Adjoint vectors y_q, one per harmonic, shape (n_freq, n_body)."""

    y: np.ndarray
    rhs: np.ndarray
    mu: float


@dataclass(frozen=True)
class StochasticGradient:
    """Gradient of the penalized sample cost, layout [dc_1..dc_n, ds_1..ds_n]."""

    values: np.ndarray
    mu: float
    direction: DirectionSample


def sample_cost(problem: ArrayProblem, u: ControlVector,
                direction: DirectionSample, mu: float,
                sol: StateSolution | None = None) -> float:
    """Penalized cost for one direction: J(u; th) + (mu/2) sum_l h_l(u; th)."""
    if sol is None:
        sol = solve_state(problem, u, direction)
    j, _ = power(problem, u, sol)
    return j + 0.5 * mu * penalty_terms(problem, sol).sum()


def solve_adjoint(problem: ArrayProblem, u: ControlVector, sol: StateSolution,
                  mu: float) -> AdjointSolution:
    """Solve Z_q^H y_q = w_q^2 C zeta_q - 2 mu V (zeta_q - eta_q) per harmonic.

    V is diagonal with the positive part of the constraint values, computed
    once from the full-frequency sums (frequency independent). The impedance
    matrices assembled for the state solve are reused conjugate-transposed.
    """
    if mu < 0:
        raise ValueError("penalty weight must be >= 0")
    v = np.maximum(constraint_values(problem, sol), 0.0)
    eta = incident_amplitudes(problem.devices, problem.grid, sol.direction)
    w2 = problem.grid.omega[:, None] ** 2
    rhs = w2 * u.damping[None, :] * sol.amplitudes \
        - 2.0 * mu * v[None, :] * (sol.amplitudes - eta)
    zh = np.conj(np.transpose(sol.impedances, (0, 2, 1)))
    try:
        y = np.linalg.solve(zh, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular adjoint system") from exc
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite adjoint solution")
    return AdjointSolution(y=y, rhs=rhs, mu=mu)


def stochastic_gradient(problem: ArrayProblem, u: ControlVector,
                        sol: StateSolution, adj: AdjointSolution) -> StochasticGradient:
    """Assemble the control gradient from state and adjoint solutions.

    d/dc_l = -sum_q (1/2 w_q^2 |zeta_ql|^2 + Re[i w_q conj(y_ql) zeta_ql])
    d/ds_l =  sum_q Re[conj(y_ql) zeta_ql]
    """
    w = problem.grid.omega[:, None]
    yz = np.conj(adj.y) * sol.amplitudes
    g_c = -(0.5 * w**2 * np.abs(sol.amplitudes) ** 2
            + np.real(1j * w * yz)).sum(axis=0)
    g_s = np.real(yz).sum(axis=0)
    return StochasticGradient(values=np.concatenate([g_c, g_s]), mu=adj.mu,
                              direction=sol.direction)


def sample_gradient(problem: ArrayProblem, u: ControlVector,
                    direction: DirectionSample, mu: float,
                    sol: StateSolution | None = None) -> StochasticGradient:
    """State solve + adjoint solve + gradient assembly for one direction."""
    if sol is None:
        sol = solve_state(problem, u, direction)
    adj = solve_adjoint(problem, u, sol, mu)
    return stochastic_gradient(problem, u, sol, adj)


def batch_incident_amplitudes(problem: ArrayProblem, angles: np.ndarray) -> np.ndarray:
    """Incident amplitudes for a batch of direction nodes, (n_freq, n_body, n_nodes)."""
    grid = problem.grid
    th = np.asarray(angles)[:, grid.component].T  # (n_freq, n_nodes)
    xs = np.array([d.x for d in problem.devices])
    ys = np.array([d.y for d in problem.devices])
    phase = grid.wavenumber[:, None, None] * (
        xs[None, :, None] * np.cos(th)[:, None, :]
        + ys[None, :, None] * np.sin(th)[:, None, :])
    return grid.amplitude[:, None, None] * np.exp(1j * phase)


def batch_cost_gradient(problem: ArrayProblem, u: ControlVector,
                        angles: np.ndarray, weights: np.ndarray, mu: float):
    """Quadrature-batched penalized cost and gradient.

    All direction nodes share the impedance matrices, so the state and adjoint
    systems are solved once per frequency with one right-hand side per node.
    Returns (weighted cost, weighted unpenalized part, weighted gradient).
    """
    grid = problem.grid
    eta, _, z, amps = _batch_solve(problem, u, angles)
    w2 = grid.omega[:, None, None] ** 2
    abs2 = np.abs(amps) ** 2
    # per-node cost pieces
    j_nodes = -0.5 * (w2 * u.damping[None, :, None] * abs2).sum(axis=(0, 1))
    diff = amps - eta
    g_nodes = (np.abs(diff) ** 2).sum(axis=0) \
        - 2.0 * problem.alpha**2 * (problem.draft**2)[:, None]  # (nb, m)
    v_nodes = np.maximum(g_nodes, 0.0)
    h_nodes = v_nodes**2
    cost_nodes = j_nodes + 0.5 * mu * h_nodes.sum(axis=0)
    rhs = w2 * u.damping[None, :, None] * amps - 2.0 * mu * v_nodes[None, :, :] * diff
    zh = np.conj(np.transpose(z, (0, 2, 1)))
    y = np.linalg.solve(zh, rhs)
    if not (np.all(np.isfinite(amps)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite batch state or adjoint solution")
    w1 = grid.omega[:, None, None]
    yz = np.conj(y) * amps
    gc_nodes = -(0.5 * w2 * abs2 + np.real(1j * w1 * yz)).sum(axis=0)  # (nb, m)
    gs_nodes = np.real(yz).sum(axis=0)
    weights = np.asarray(weights)
    cost = float(cost_nodes @ weights)
    j_part = float(j_nodes @ weights)
    grad = np.concatenate([gc_nodes @ weights, gs_nodes @ weights])
    return cost, j_part, grad


def _batch_forces(problem: ArrayProblem, angles: np.ndarray,
                  eta: np.ndarray) -> np.ndarray:
    """Excitation forces for all nodes, (n_freq, n_body, n_nodes)."""
    if problem.db.mode == "plane-wave-phase":
        # eta already carries a_q and the plane-wave phase at the centers,
        # and the reference amplitude is per meter of incident amplitude
        return problem.db.excitation_ref[:, :, None] * eta
    from .hydro import excitation_forces

    return np.stack([
        excitation_forces(problem.db, problem.devices, problem.grid,
                          DirectionSample(angles=np.asarray(th)))
        for th in angles], axis=2)


def _batch_solve(problem: ArrayProblem, u: ControlVector, angles: np.ndarray):
    from .dynamics import assemble_impedances

    eta = batch_incident_amplitudes(problem, angles)
    forces = _batch_forces(problem, angles, eta)
    z = assemble_impedances(problem, u)
    try:
        amps = np.linalg.solve(z, forces)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular impedance system in batch solve") from exc
    return eta, forces, z, amps


def batch_cost(problem: ArrayProblem, u: ControlVector, angles: np.ndarray,
               weights: np.ndarray, mu: float) -> float:
    """Quadrature-batched penalized cost (no adjoint solves)."""
    grid = problem.grid
    eta, _, _, amps = _batch_solve(problem, u, angles)
    w2 = grid.omega[:, None, None] ** 2
    j_nodes = -0.5 * (w2 * u.damping[None, :, None] * np.abs(amps) ** 2).sum(axis=(0, 1))
    g_nodes = (np.abs(amps - eta) ** 2).sum(axis=0) \
        - 2.0 * problem.alpha**2 * (problem.draft**2)[:, None]
    cost_nodes = j_nodes + 0.5 * mu * (np.maximum(g_nodes, 0.0) ** 2).sum(axis=0)
    return float(cost_nodes @ np.asarray(weights))


def batch_power_report(problem: ArrayProblem, u: ControlVector,
                       angles: np.ndarray, weights: np.ndarray):
    """Weighted expected power, per-device powers and E[h] over a node set."""
    grid = problem.grid
    eta, _, _, amps = _batch_solve(problem, u, angles)
    w2 = grid.omega[:, None, None] ** 2
    p_dev_nodes = 0.5 * (w2 * np.abs(amps) ** 2).sum(axis=0) \
        * u.damping[:, None]  # (nb, m)
    g_nodes = (np.abs(amps - eta) ** 2).sum(axis=0) \
        - 2.0 * problem.alpha**2 * (problem.draft**2)[:, None]
    h_nodes = np.maximum(g_nodes, 0.0) ** 2
    weights = np.asarray(weights)
    per_device = p_dev_nodes @ weights
    return float(per_device.sum()), per_device, h_nodes @ weights


def fd_gradient(problem: ArrayProblem, u: ControlVector,
                direction: DirectionSample, mu: float,
                step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of the penalized sample cost.

    Component step is step*(1+|u_i|); if a perturbation would leave the
    admissible set the difference is one-sided at the boundary.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    u0 = u.as_array()
    n = u0.size
    out = np.empty(n)
    base = None
    for i in range(n):
        h = step * (1.0 + abs(u0[i]))
        up, dn = u0.copy(), u0.copy()
        up[i] += h
        dn[i] -= h
        if not problem.is_admissible(ControlVector.from_array(dn)):
            if base is None:
                base = sample_cost(problem, u, direction, mu)
            f_up = sample_cost(problem, ControlVector.from_array(up), direction, mu)
            out[i] = (f_up - base) / h
            continue
        f_up = sample_cost(problem, ControlVector.from_array(up), direction, mu)
        f_dn = sample_cost(problem, ControlVector.from_array(dn), direction, mu)
        out[i] = (f_up - f_dn) / (2.0 * h)
    return out
