import math

import numpy as np
import pytest

from carleman_lab.coefficients import classify, make_power_coefficient
from carleman_lab.control import (
    dual_functional,
    dual_gradient,
    synthesize_null_control,
    verify_control,
)
from carleman_lab.functionals import WeightedNorms
from carleman_lab.pde_solver import (
    ProblemSpec,
    assemble_diffusion,
    boundary_regime_for,
    build_mesh,
    solve_forward,
)


def make_spec(gamma=0.5, N=64, M=64, T=0.5, omega=(0.3, 0.7)):
    coef = make_power_coefficient(gamma)
    rep = classify(coef)
    return ProblemSpec(
        T=T,
        coef=coef,
        regime=boundary_regime_for(rep),
        mesh=build_mesh(N, 2.0),
        time_steps=M,
        omega=omega,
        hypothesis=rep,
    )


class TestSynthesis:
    def test_zero_initial_state(self):
        spec = make_spec(N=32, M=32)
        res = synthesize_null_control(spec, np.zeros(spec.mesh.nodes.size), 1e-6)
        assert res.terminal_norm == 0.0
        assert res.cg_iterations <= 1
        assert np.all(res.control.values == 0.0)

    def test_steers_terminal_state_down(self):
        spec = make_spec()
        u0 = np.sin(np.pi * spec.mesh.nodes)
        res = synthesize_null_control(spec, u0, 1e-6)
        norms = WeightedNorms(spec.mesh, spec.coef)
        assert res.converged
        assert res.terminal_norm <= 1e-2 * norms.norm("L2", u0)

    def test_verify_matches_result(self):
        spec = make_spec()
        u0 = np.sin(np.pi * spec.mesh.nodes)
        res = synthesize_null_control(spec, u0, 1e-6)
        assert verify_control(spec, u0, res.control) == pytest.approx(
            res.terminal_norm, abs=1e-12
        )

    def test_free_decay_strictly_positive(self):
        # pure decay cannot reach exact zero in finite time
        spec = make_spec()
        u0 = np.sin(np.pi * spec.mesh.nodes)
        op = assemble_diffusion(spec.coef, spec.mesh, spec.regime)
        traj = solve_forward(spec, u0)
        free = op.norm(op.restrict(traj.values[-1]))
        assert free > 0.0
        res = synthesize_null_control(spec, u0, 1e-6)
        assert res.terminal_norm < free

    def test_support_confined_to_omega(self):
        spec = make_spec()
        u0 = np.sin(np.pi * spec.mesh.nodes)
        res = synthesize_null_control(spec, u0, 1e-4)
        outside = (spec.mesh.nodes <= spec.omega[0]) | (spec.mesh.nodes >= spec.omega[1])
        assert np.all(res.control.values[:, outside] == 0.0)

    def test_epsilon_law_slope(self):
        # the terminal norm scales like sqrt(epsilon) under observability
        spec = make_spec()
        u0 = np.sin(np.pi * spec.mesh.nodes)
        eps = np.array([1e-4, 1e-6, 1e-8])
        terminals = [synthesize_null_control(spec, u0, e).terminal_norm for e in eps]
        slope = np.polyfit(np.log(eps), np.log(terminals), 1)[0]
        assert 0.35 <= slope <= 0.65

    def test_cost_monotone_in_penalty(self):
        spec = make_spec(N=48, M=48)
        u0 = np.sin(np.pi * spec.mesh.nodes)
        costs = [
            synthesize_null_control(spec, u0, e).control_cost
            for e in (1e-4, 1e-6, 1e-8)
        ]
        assert costs[0] <= costs[1] <= costs[2]

    def test_both_boundary_regimes_converge(self):
        for gamma in (0.5, 1.5):
            spec = make_spec(gamma=gamma, N=48, M=48)
            u0 = np.sin(np.pi * spec.mesh.nodes)
            res = synthesize_null_control(spec, u0, 1e-6)
            assert res.converged
            assert math.isfinite(res.terminal_norm)

    def test_penalty_validation(self):
        spec = make_spec(N=32, M=32)
        u0 = np.sin(np.pi * spec.mesh.nodes)
        with pytest.raises(ValueError, match="positive"):
            synthesize_null_control(spec, u0, 0.0)
        with pytest.raises(ValueError, match="penalty underflow"):
            synthesize_null_control(spec, u0, 1e-16)

    def test_stagnation_reported(self):
        spec = make_spec(N=48, M=48)
        u0 = np.sin(np.pi * spec.mesh.nodes)
        res = synthesize_null_control(spec, u0, 1e-8, cg_max_iter=3)
        assert not res.converged
        assert res.cg_iterations == 3


class TestDualFunctional:
    def test_optimality_identities(self):
        # at the minimizer, J = <b, v>/2 with b the free terminal state, and
        # the gradient residual is small against the data scale
        spec = make_spec(N=48, M=48)
        u0 = np.sin(np.pi * spec.mesh.nodes)
        eps = 1e-6
        res = synthesize_null_control(spec, u0, eps, cg_tol=1e-10)
        op = assemble_diffusion(spec.coef, spec.mesh, spec.regime)
        b = op.restrict(solve_forward(spec, u0).values[-1])
        v_hat = op.restrict(res.v_T)
        j_val = dual_functional(spec, u0, eps, res.v_T)
        assert j_val == pytest.approx(0.5 * op.inner(b, v_hat), rel=1e-8)
        grad = op.restrict(dual_gradient(spec, u0, eps, res.v_T))
        assert op.norm(grad) <= 1e-9 * op.norm(b) + 1e-14

    def test_gradient_against_central_differences(self):
        # the functional is quadratic, so central differences are exact up to
        # rounding; the tolerance matches the acceptance requirement
        spec = make_spec(N=48, M=48)
        u0 = np.sin(np.pi * spec.mesh.nodes)
        op = assemble_diffusion(spec.coef, spec.mesh, spec.regime)
        vT = 0.4 * np.sin(2 * np.pi * spec.mesh.nodes)
        grad = op.restrict(dual_gradient(spec, u0, 1e-6, vT))
        rng = np.random.default_rng(17)
        for _ in range(10):
            d = rng.standard_normal(spec.mesh.nodes.size)
            d[0] = d[-1] = 0.0
            du = op.restrict(d)
            h = 1e-4
            fd = (
                dual_functional(spec, u0, 1e-6, vT + h * d)
                - dual_functional(spec, u0, 1e-6, vT - h * d)
            ) / (2 * h)
            an = op.inner(grad, du)
            assert abs(fd - an) / (abs(an) + 1e-30) < 1e-6
