import numpy as np
import pytest

from wecpark.dynamics import ControlVector, solve_state, assemble_impedances
from wecpark.gradient import (
    fd_gradient,
    sample_cost,
    sample_gradient,
    solve_adjoint,
    stochastic_gradient,
)
from wecpark.waves import DirectionSample

from test_dynamics import make_problem, controls

HEAD_ON = DirectionSample(angles=np.array([0.0]))
THREE_BODY = ((0.0, 0.0), (16.0, 0.0), (8.0, 14.0))


def random_controls(problem, rng):
    k_bar = problem.devices[0].stiffness
    w_p = 2 * np.pi / 5.83
    n = problem.n_body
    c = np.exp(rng.uniform(np.log(0.5 * k_bar / w_p), np.log(5 * k_bar / w_p), n))
    s = rng.uniform(-0.5 * k_bar, 0.5 * k_bar, n)
    return ControlVector(damping=c, stiffness=s)


class TestAdjointSolve:
    def test_residual_small(self):
        problem = make_problem(positions=THREE_BODY, n_bins=5)
        rng = np.random.default_rng(3)
        for _ in range(10):
            u = random_controls(problem, rng)
            th = DirectionSample(angles=rng.uniform(-0.5, 0.5, 1))
            sol = solve_state(problem, u, th)
            adj = solve_adjoint(problem, u, sol, mu=rng.uniform(0, 10))
            z = assemble_impedances(problem, u)
            for q in range(problem.grid.n_freq):
                resid = np.conj(z[q]).T @ adj.y[q] - adj.rhs[q]
                assert np.linalg.norm(resid) <= 1e-10 * max(
                    np.linalg.norm(adj.rhs[q]), 1e-300)

    def test_feasible_state_drops_penalty_term(self):
        # with g <= 0 the rhs reduces to the power term
        problem = make_problem(positions=THREE_BODY, n_bins=5)
        u = controls(problem)
        sol = solve_state(problem, u, HEAD_ON)
        from wecpark.dynamics import constraint_values
        from wecpark.hydro import incident_amplitudes
        # devices riding the wave: zero relative motion, g < 0
        sol.amplitudes[:] = incident_amplitudes(problem.devices, problem.grid,
                                                HEAD_ON)
        assert np.all(constraint_values(problem, sol) < 0)
        adj = solve_adjoint(problem, u, sol, mu=25.0)
        w2 = problem.grid.omega[:, None] ** 2
        assert np.allclose(adj.rhs, w2 * u.damping * sol.amplitudes)

    def test_zero_forcing_rhs_from_incident_wave_only(self):
        problem = make_problem(n_bins=4)
        problem.db.excitation_ref[:] = 0.0
        u = controls(problem)
        sol = solve_state(problem, u, HEAD_ON)
        assert np.all(sol.amplitudes == 0)
        from wecpark.dynamics import constraint_values
        from wecpark.hydro import incident_amplitudes
        v = np.maximum(constraint_values(problem, sol), 0.0)
        eta = incident_amplitudes(problem.devices, problem.grid, HEAD_ON)
        adj = solve_adjoint(problem, u, sol, mu=2.0)
        assert np.allclose(adj.rhs, -2.0 * 2.0 * v[None, :] * (-eta))

    def test_rejects_negative_mu(self):
        problem = make_problem(n_bins=3)
        u = controls(problem)
        sol = solve_state(problem, u, HEAD_ON)
        with pytest.raises(ValueError):
            solve_adjoint(problem, u, sol, mu=-1.0)


class TestGradientValues:
    def test_zero_state_zero_gradient(self):
        problem = make_problem(n_bins=4)
        problem.db.excitation_ref[:] = 0.0
        # also zero incident wave so the penalty cannot excite the adjoint
        problem.grid.amplitude[:] = 0.0
        u = controls(problem)
        g = sample_gradient(problem, u, HEAD_ON, mu=3.0)
        assert np.all(g.values == 0.0)

    def test_single_body_single_frequency_closed_form(self):
        # unpenalized scalar case: J(c, s) = -w^2 c |F|^2 / (2 |Z|^2)
        problem = make_problem(n_bins=1)
        c, s = 21000.0, -12000.0
        u = ControlVector(damping=[c], stiffness=[s])
        sol = solve_state(problem, u, HEAD_ON)
        g = sample_gradient(problem, u, HEAD_ON, mu=0.0).values
        w = problem.grid.omega[0]
        m = problem.devices[0].mass + problem.db.added_mass[0, 0, 0]
        k = problem.devices[0].stiffness
        b = problem.db.radiation_damping[0, 0, 0]
        f2 = abs(sol.forces[0, 0]) ** 2
        re = k + s - w**2 * m
        z2 = re**2 + w**2 * (c + b) ** 2
        dj_dc = -0.5 * w**2 * f2 / z2 + 0.5 * w**2 * c * f2 * 2 * w**2 * (c + b) / z2**2
        dj_ds = 0.5 * w**2 * c * f2 * 2 * re / z2**2
        assert g[0] == pytest.approx(dj_dc, rel=1e-10)
        assert g[1] == pytest.approx(dj_ds, rel=1e-10)

    def test_matches_finite_differences(self):
        problem = make_problem(positions=THREE_BODY, n_bins=5)
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(25):
            u = random_controls(problem, rng)
            th = DirectionSample(angles=rng.uniform(-0.6, 0.6, 1))
            mu = rng.uniform(0.0, 5.0)
            g = sample_gradient(problem, u, th, mu).values
            fd = fd_gradient(problem, u, th, mu, step=1e-4)
            scale = np.maximum(np.abs(fd), 1e-12 * np.max(np.abs(fd)))
            worst = max(worst, np.max(np.abs(g - fd) / scale))
        assert worst < 1e-5

    def test_penalty_gradient_continuous_at_boundary(self):
        # crossing g = 0 must not jump the gradient: the V term carries [g]+
        problem = make_problem(positions=((0.0, 0.0), (16.0, 0.0)), n_bins=5)
        mu = 4.0
        k_bar = problem.devices[0].stiffness
        grads = []
        scales = np.linspace(0.9, 1.1, 41)
        for fac in scales:
            u = ControlVector(damping=np.full(2, fac * 2.0e5),
                              stiffness=np.full(2, -0.2 * k_bar))
            grads.append(sample_gradient(problem, u, HEAD_ON, mu).values)
        grads = np.array(grads)
        steps = np.abs(np.diff(grads, axis=0)).max(axis=1)
        # finite differences of a C^1 path: increments stay comparable
        assert steps.max() < 10 * np.median(steps) + 1e-12


class TestBatchEvaluation:
    """The node-batched path must reproduce the per-node path exactly."""

    def _setup(self):
        problem = make_problem(positions=THREE_BODY, n_bins=6)
        rng = np.random.default_rng(23)
        u = random_controls(problem, rng)
        angles = rng.uniform(-0.5, 0.5, (7, 1))
        weights = rng.uniform(0.1, 0.5, 7)
        return problem, u, angles, weights

    def test_batch_cost_matches_loop(self):
        from wecpark.gradient import batch_cost
        problem, u, angles, weights = self._setup()
        mu = 3.0
        loop = sum(w * sample_cost(problem, u, DirectionSample(angles=th), mu)
                   for th, w in zip(angles, weights))
        assert batch_cost(problem, u, angles, weights, mu) == \
            pytest.approx(loop, rel=1e-12)

    def test_batch_gradient_matches_loop(self):
        from wecpark.gradient import batch_cost_gradient
        problem, u, angles, weights = self._setup()
        mu = 3.0
        cost, j_part, grad = batch_cost_gradient(problem, u, angles, weights, mu)
        grad_loop = np.zeros_like(grad)
        j_loop = 0.0
        for th, w in zip(angles, weights):
            d = DirectionSample(angles=th)
            sol = solve_state(problem, u, d)
            from wecpark.dynamics import power
            j, _ = power(problem, u, sol)
            j_loop += w * j
            grad_loop += w * sample_gradient(problem, u, d, mu, sol=sol).values
        assert j_part == pytest.approx(j_loop, rel=1e-12)
        assert np.allclose(grad, grad_loop, rtol=1e-12)

    def test_batch_report_matches_loop(self):
        from wecpark.gradient import batch_power_report
        from wecpark.dynamics import penalty_terms, power
        problem, u, angles, weights = self._setup()
        total, per_device, e_h = batch_power_report(problem, u, angles, weights)
        p_loop = np.zeros(problem.n_body)
        h_loop = np.zeros(problem.n_body)
        for th, w in zip(angles, weights):
            sol = solve_state(problem, u, DirectionSample(angles=th))
            _, p_dev = power(problem, u, sol)
            p_loop += w * p_dev
            h_loop += w * penalty_terms(problem, sol)
        assert np.allclose(per_device, p_loop, rtol=1e-12)
        assert np.allclose(e_h, h_loop, rtol=1e-12)
        assert total == pytest.approx(p_loop.sum(), rel=1e-12)


class TestFiniteDifferenceOracle:
    def test_exact_on_quadratic(self):
        # central differences are exact for quadratics at any step
        h_mat = np.array([[2.0, 0.3, 0.0, 0.0],
                          [0.3, 1.5, 0.1, 0.0],
                          [0.0, 0.1, 1.0, 0.2],
                          [0.0, 0.0, 0.2, 3.0]])
        lin = np.array([1.0, -2.0, 0.5, 0.0])

        def f(x):
            return 0.5 * x @ h_mat @ x + lin @ x

        x0 = np.array([0.3, -0.7, 1.1, 0.9])
        for step in (1e-3, 1e-1, 1.0):
            fd = np.array([
                (f(x0 + step * e) - f(x0 - step * e)) / (2 * step)
                for e in np.eye(4)
            ])
            assert np.allclose(fd, h_mat @ x0 + lin, rtol=1e-9)

    def test_step_halving_reduces_error_quadratically(self):
        problem = make_problem(positions=((0.0, 0.0), (16.0, 0.0)), n_bins=4)
        u = controls(problem, c=2.5e5, s=-4e4)
        mu = 2.0
        g = sample_gradient(problem, u, HEAD_ON, mu).values
        errs = []
        for step in (4e-3, 2e-3, 1e-3):
            fd = fd_gradient(problem, u, HEAD_ON, mu, step=step)
            errs.append(np.max(np.abs(fd - g)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.5)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.5)

    def test_one_sided_at_admissible_boundary(self):
        problem = make_problem(n_bins=3)
        u = ControlVector(damping=[problem.damping_floor], stiffness=[0.0])
        fd = fd_gradient(problem, u, HEAD_ON, mu=0.0, step=1e-4)
        assert np.all(np.isfinite(fd))

    def test_rejects_bad_step(self):
        problem = make_problem(n_bins=3)
        with pytest.raises(ValueError):
            fd_gradient(problem, controls(problem), HEAD_ON, 0.0, step=0.0)
