"""Stochastic optimization of the array controls: projection onto the
admissible set, robust stochastic approximation with variable stepsize and
iterate averaging, sample average approximation with Monte Carlo or
Gauss-Legendre quadrature and Armijo projected descent, and the outer
quadratic penalty loop."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .dynamics import ArrayProblem, ControlVector, penalty_terms, power, solve_state
from .errors import NumericalError
from .gradient import (
    batch_cost as gradient_batch_cost,
    batch_cost_gradient as gradient_batch_cost_gradient,
    batch_power_report,
    sample_cost,
    sample_gradient,
)
from .quadrature import gauss_legendre_on
from .waves import (
    DirectionSample,
    donelan_pdf,
    effective_interval,
    sample_direction,
    subseed_rng,
)

MONTE_CARLO = "monte-carlo"
GAUSS_LEGENDRE = "gauss-legendre"

# sub-seed stream tags
_STREAM_SA = 1
_STREAM_SAA = 2


@dataclass(frozen=True)
class ArmijoParams:
    sufficient_decrease: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40


@dataclass(frozen=True)
class PenaltyConfig:
    """Outer quadratic-penalty loop parameters.

    mu0 = None auto-scales the initial weight from the initial cost/violation
    ratio; tau_in0 = None starts the inner tolerance at 1e-2 times the initial
    stationarity measure.
    """

    mu0: Optional[float] = None
    mu_growth: float = 10.0
    tau_out: float = 1e-3
    tau_in0: Optional[float] = None
    tau_in_decay: float = 0.5
    max_outer: int = 12
    n_check: int = 64
    check_tail: float = 1e-3


@dataclass(frozen=True)
class SAConfig:
    """Robust stochastic approximation: t_k = t0/sqrt(k+1), trailing-window
    iterate averaging, window-mean gradient stopping indicator."""

    initial_step: Optional[float] = None
    window: int = 60
    max_iters: int = 4000
    armijo: ArmijoParams = ArmijoParams()


@dataclass(frozen=True)
class SAAConfig:
    """Sample average approximation with nodes frozen per inner solve."""

    kind: str = GAUSS_LEGENDRE
    n_nodes: int = 16
    tail: float = 1e-3
    max_iters: int = 400
    armijo: ArmijoParams = ArmijoParams()

    def __post_init__(self):
        if self.kind not in (MONTE_CARLO, GAUSS_LEGENDRE):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")


InnerConfig = Union[SAConfig, SAAConfig]


@dataclass
class TraceRow:
    outer: int
    inner: int
    cost: float
    penalty: float
    mu: float
    indicator: float


@dataclass
class RunReport:
    """Full outcome of a penalty-loop run."""

    controls: ControlVector
    expected_power: float
    per_device_power: np.ndarray
    expected_h: np.ndarray
    feasible: bool
    history: list[TraceRow]
    seed: int
    outer_iterations: int
    mu_final: float
    tau_out: float
    interaction_factor: Optional[float] = None
    isolated_power: Optional[float] = None
    isolated_controls: Optional[np.ndarray] = None
    wall_time_s: float = 0.0
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ControlObjective:
    """What the inner solvers need from an optimization instance.

    cost(u, direction, mu) is the penalized sample objective; cost_gradient
    returns (cost, unpenalized part, gradient). node_rule builds quadrature
    nodes/weights for the direction expectation. The optional batch callables
    evaluate a whole node set at once (weighted); when absent the solvers
    fall back to per-node loops.
    """

    dim: int
    project: Callable[[np.ndarray], np.ndarray]
    draw: Callable[[np.random.Generator], DirectionSample]
    cost: Callable[[np.ndarray, DirectionSample, float], float]
    cost_gradient: Callable[[np.ndarray, DirectionSample, float],
                            tuple[float, float, np.ndarray]]
    node_rule: Callable[[str, int, float, Optional[np.random.Generator]],
                        tuple[np.ndarray, np.ndarray]]
    batch_cost: Optional[Callable] = None
    batch_cost_gradient: Optional[Callable] = None


def project(u: ControlVector, damping_floor: float,
            positive_stiffness: bool) -> ControlVector:
    """Clamp damping at the floor; clamp stiffness at zero in positive mode."""
    s = np.maximum(u.stiffness, 0.0) if positive_stiffness else u.stiffness.copy()
    return ControlVector(damping=np.maximum(u.damping, damping_floor), stiffness=s)


def project_for(problem: ArrayProblem, u: ControlVector) -> ControlVector:
    return project(u, problem.damping_floor, problem.positive_stiffness)


def saa_nodes(kind: str, n: int, spreadings, tail: float,
              rng: Optional[np.random.Generator] = None):
    """Quadrature nodes/weights for the direction expectation.

    Monte Carlo: inverse-transform draws with uniform weights 1/n.
    Gauss-Legendre: the n-point rule on the effective interval of each
    component, with the spreading density folded into the weights; multiple
    components tensorize.

    Returns
    -------
    angles : ndarray (n_nodes, n_components)
    weights : ndarray (n_nodes,)
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    spreadings = list(spreadings)
    if kind == MONTE_CARLO:
        if rng is None:
            raise ValueError("Monte Carlo nodes need a random generator")
        draws = [sample_direction(rng, spreadings) for _ in range(n)]
        angles = np.array([d.angles for d in draws])
        return angles, np.full(n, 1.0 / n)
    if kind != GAUSS_LEGENDRE:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    axes, waxes = [], []
    for sp in spreadings:
        lo, hi = effective_interval(sp, tail)
        x, w = gauss_legendre_on(n, lo, hi)
        axes.append(x)
        waxes.append(w * donelan_pdf(x, sp))
    grids = np.meshgrid(*axes, indexing="ij")
    wgrids = np.meshgrid(*waxes, indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return angles, weights


def objective_for(problem: ArrayProblem) -> ControlObjective:
    """Bridge an array instance to the inner solvers."""

    def _project(u: np.ndarray) -> np.ndarray:
        return project_for(problem, ControlVector.from_array(u)).as_array()

    def _draw(rng: np.random.Generator) -> DirectionSample:
        return sample_direction(rng, problem.climate.spreadings)

    def _cost(u: np.ndarray, d: DirectionSample, mu: float) -> float:
        return sample_cost(problem, ControlVector.from_array(u), d, mu)

    def _cost_gradient(u, d, mu):
        uv = ControlVector.from_array(u)
        sol = solve_state(problem, uv, d)
        j, _ = power(problem, uv, sol)
        pen = 0.5 * mu * penalty_terms(problem, sol).sum()
        g = sample_gradient(problem, uv, d, mu, sol=sol).values
        return j + pen, j, g

    def _nodes(kind, n, tail, rng):
        return saa_nodes(kind, n, problem.climate.spreadings, tail, rng)

    def _batch_cost_fn(u, angles, weights, mu):
        return gradient_batch_cost(problem, ControlVector.from_array(u),
                                   angles, weights, mu)

    def _batch_grad_fn(u, angles, weights, mu):
        return gradient_batch_cost_gradient(problem, ControlVector.from_array(u),
                                            angles, weights, mu)

    return ControlObjective(dim=2 * problem.n_body, project=_project,
                            draw=_draw, cost=_cost,
                            cost_gradient=_cost_gradient, node_rule=_nodes,
                            batch_cost=_batch_cost_fn,
                            batch_cost_gradient=_batch_grad_fn)


def _as_objective(problem) -> ControlObjective:
    if isinstance(problem, ControlObjective):
        return problem
    return objective_for(problem)


def _as_array(u) -> np.ndarray:
    if isinstance(u, ControlVector):
        return u.as_array()
    return np.asarray(u, dtype=float).copy()


def _wrap_like(u_ref, u_arr: np.ndarray):
    if isinstance(u_ref, ControlVector):
        return ControlVector.from_array(u_arr)
    return u_arr


def sa_stepsize(t0: float, k: int) -> float:
    """Robust variable stepsize t_k = t0 / sqrt(k+1)."""
    return t0 / np.sqrt(k + 1.0)


def _batch_cost(obj: ControlObjective, u: np.ndarray, angles, weights,
                mu: float) -> float:
    if obj.batch_cost is not None:
        return obj.batch_cost(u, angles, weights, mu)
    return sum(w * obj.cost(u, DirectionSample(angles=np.asarray(th)), mu)
               for th, w in zip(angles, weights))


def _batch_cost_gradient(obj: ControlObjective, u: np.ndarray, angles, weights,
                         mu: float):
    if obj.batch_cost_gradient is not None:
        return obj.batch_cost_gradient(u, angles, weights, mu)
    cost = 0.0
    j_part = 0.0
    grad = np.zeros(u.size)
    for th, w in zip(angles, weights):
        c, j, g = obj.cost_gradient(u, DirectionSample(angles=np.asarray(th)), mu)
        cost += w * c
        j_part += w * j
        grad += w * g
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in quadrature batch")
    return cost, j_part, grad


def estimate_initial_step(problem, u0, direction: DirectionSample, mu: float,
                          armijo: ArmijoParams = ArmijoParams()
                          ) -> tuple[float, bool]:
    """Armijo line search along one sampled negative gradient.

    Returns (step, ok). ok is False for a stationary start or when no
    decrease was found within the backtrack budget (the floor step is
    returned in that case).
    """
    obj = _as_objective(problem)
    u0_arr = _as_array(u0)
    f0, _, g = obj.cost_gradient(u0_arr, direction, mu)
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        return 0.0, False
    t = (np.linalg.norm(u0_arr) + 1.0) / gnorm
    for _ in range(armijo.max_backtracks):
        trial = obj.project(u0_arr - t * g)
        if obj.cost(trial, direction, mu) <= \
                f0 + armijo.sufficient_decrease * g @ (trial - u0_arr):
            return t, True
        t *= armijo.backtrack
    return t, False


def sa_minimize(problem, u0, mu: float, cfg: SAConfig,
                rng: np.random.Generator, tau_in: float, outer: int = 0):
    """Robust SA: u_{k+1} = P(u_k - t_k G_k) with t_k = t0/sqrt(k+1).

    The returned control is the step-weighted average over the trailing
    window, a convex combination of admissible iterates. The stopping
    indicator is the norm of the window-mean stochastic gradient, armed once
    the window has filled.
    """
    obj = _as_objective(problem)
    u = obj.project(_as_array(u0))
    t0 = cfg.initial_step
    warned = False
    if t0 is None:
        t0, ok = estimate_initial_step(problem, u, obj.draw(rng), mu, cfg.armijo)
        if not ok:
            if t0 == 0.0:  # stationary start
                return _wrap_like(u0, u), [], True
            warned = True
    window: deque[tuple[float, np.ndarray]] = deque(maxlen=cfg.window)
    grads: deque[np.ndarray] = deque(maxlen=cfg.window)
    window.append((t0, u.copy()))
    trace: list[TraceRow] = []
    converged = False
    for k in range(cfg.max_iters):
        d = obj.draw(rng)
        cost, j_part, g = obj.cost_gradient(u, d, mu)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite stochastic gradient at step {k}")
        u = obj.project(u - sa_stepsize(t0, k) * g)
        window.append((sa_stepsize(t0, k + 1), u.copy()))
        grads.append(g)
        ind = np.linalg.norm(np.mean(grads, axis=0)) if len(grads) == cfg.window \
            else np.inf
        trace.append(TraceRow(outer=outer, inner=k, cost=j_part,
                              penalty=cost - j_part, mu=mu, indicator=ind))
        if ind <= tau_in:
            converged = True
            break
    t_sum = sum(t for t, _ in window)
    u_avg = sum(t * ui for t, ui in window) / t_sum
    return _wrap_like(u0, obj.project(u_avg)), trace, converged and not warned


def saa_minimize(problem, u0, mu: float, cfg: SAAConfig,
                 rng: Optional[np.random.Generator], tau_in: float,
                 outer: int = 0, nodes=None):
    """Projected Armijo gradient descent on the frozen-node quadrature
    objective; stops when ||u - P(u - grad)|| <= tau_in."""
    obj = _as_objective(problem)
    if nodes is None:
        angles, weights = obj.node_rule(cfg.kind, cfg.n_nodes, cfg.tail, rng)
    else:
        angles, weights = nodes
    u = obj.project(_as_array(u0))
    cost, j_part, grad = _batch_cost_gradient(obj, u, angles, weights, mu)
    t = None
    trace: list[TraceRow] = []
    converged = False
    for k in range(cfg.max_iters):
        stationarity = np.linalg.norm(u - obj.project(u - grad))
        trace.append(TraceRow(outer=outer, inner=k, cost=j_part,
                              penalty=cost - j_part, mu=mu,
                              indicator=stationarity))
        if stationarity <= tau_in:
            converged = True
            break
        if t is None:
            t = (np.linalg.norm(u) + 1.0) / np.linalg.norm(grad)
        accepted = False
        trial = u
        for _ in range(cfg.armijo.max_backtracks):
            trial = obj.project(u - t * grad)
            if np.array_equal(trial, u):
                break  # step below floating-point resolution
            f_trial = _batch_cost(obj, trial, angles, weights, mu)
            if f_trial <= cost + cfg.armijo.sufficient_decrease \
                    * grad @ (trial - u):
                accepted = True
                break
            t *= cfg.armijo.backtrack
        if not accepted:
            break  # no descent within budget: numerically stationary
        u = trial
        cost, j_part, grad = _batch_cost_gradient(obj, u, angles, weights, mu)
        t = t / cfg.armijo.backtrack  # allow the step to grow again
    return _wrap_like(u0, u), trace, converged


def check_rule(problem: ArrayProblem, n_check: int, tail: float):
    """Fixed Gauss-Legendre rule used for feasibility tests and reporting,
    independent of the inner optimization method."""
    return saa_nodes(GAUSS_LEGENDRE, n_check, problem.climate.spreadings, tail)


def expected_report(problem: ArrayProblem, u: ControlVector, angles, weights):
    """Expected power, per-device powers and E[h_l] under the given rule."""
    return batch_power_report(problem, u, angles, weights)


def expected_h(problem: ArrayProblem, u: ControlVector, angles, weights):
    _, _, e_h = expected_report(problem, u, angles, weights)
    return e_h


def _auto_mu0(problem: ArrayProblem, u: ControlVector) -> float:
    """Scale-free initial penalty weight from the dominant-direction sample."""
    th0 = DirectionSample(angles=np.array([sp.theta0
                                           for sp in problem.climate.spreadings]))
    sol = solve_state(problem, u, th0)
    j, _ = power(problem, u, sol)
    h_sum = penalty_terms(problem, sol).sum()
    return 1e-2 * abs(j) / max(h_sum, 1e-12)


def penalty_loop(problem: ArrayProblem, u0: ControlVector, pcfg: PenaltyConfig,
                 inner: InnerConfig, seed: int) -> RunReport:
    """Outer quadratic-penalty iteration around SA or SAA inner solves.

    Feasibility (max_l E[h_l] <= tau_out) is always measured with the fixed
    Gauss-Legendre check rule, independent of the inner method. At least one
    inner solve runs, so feasible starting points still get optimized.
    """
    t_start = time.perf_counter()
    u = project_for(problem, u0)
    chk_angles, chk_weights = check_rule(problem, pcfg.n_check, pcfg.check_tail)
    mu = pcfg.mu0 if pcfg.mu0 is not None else _auto_mu0(problem, u)
    if mu <= 0:
        raise ValueError("initial penalty weight must be > 0")
    obj = objective_for(problem)
    tau_in = pcfg.tau_in0
    if tau_in is None:
        _, _, g0 = _batch_cost_gradient(obj, u.as_array(), chk_angles,
                                        chk_weights, mu)
        stat0 = np.linalg.norm(u.as_array() - obj.project(u.as_array() - g0))
        tau_in = 1e-2 * stat0 if stat0 > 0 else 1e-12
    history: list[TraceRow] = []
    warnings: list[str] = []
    feasible = False
    outer_done = 0
    for j in range(pcfg.max_outer):
        if isinstance(inner, SAConfig):
            u, trace, ok = sa_minimize(problem, u, mu, inner,
                                       subseed_rng(seed, _STREAM_SA, j),
                                       tau_in, outer=j)
        else:
            u, trace, ok = saa_minimize(problem, u, mu, inner,
                                        subseed_rng(seed, _STREAM_SAA, j),
                                        tau_in, outer=j)
        if not ok:
            warnings.append(f"inner solve at outer iteration {j} stopped "
                            f"before reaching tolerance {tau_in:.3g}")
        history.extend(trace)
        outer_done = j + 1
        e_h = expected_h(problem, u, chk_angles, chk_weights)
        if float(e_h.max()) <= pcfg.tau_out:
            feasible = True
            break
        mu *= pcfg.mu_growth
        tau_in *= pcfg.tau_in_decay
    total, per_device, e_h = expected_report(problem, u, chk_angles, chk_weights)
    return RunReport(
        controls=u,
        expected_power=total,
        per_device_power=per_device,
        expected_h=e_h,
        feasible=feasible,
        history=history,
        seed=seed,
        outer_iterations=outer_done,
        mu_final=mu,
        tau_out=pcfg.tau_out,
        wall_time_s=time.perf_counter() - t_start,
        warnings=warnings,
    )
