"""Approximate null-control synthesis by penalized dual minimization.

The dual functional over terminal adjoint data is quadratic and coercive:
half the control energy of the restricted adjoint, plus a penalty on the
terminal data, plus the pairing with the initial state.  Its gradient is one
backward solve followed by one forward solve, exact to rounding because the
backward march is the transpose of the forward one, so conjugate gradients
minimizes it without ever forming a matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .pde_solver import (
    ProblemSpec,
    _adjoint_march,
    _Stepper,
    omega_node_mask,
    solve_forward,
    substep_times,
)

__all__ = [
    "SpaceTimeControl",
    "ControlResult",
    "synthesize_null_control",
    "verify_control",
    "dual_functional",
    "dual_gradient",
]

MIN_PENALTY = 1e-14


@dataclass
class SpaceTimeControl:
    """Per-substep control samples supported on the control-region nodes."""

    sample_times: np.ndarray  # (J,)
    taus: np.ndarray  # (J,)
    values: np.ndarray  # (J, N+1) nodal samples, zero outside omega
    omega: tuple

    def as_callable(self):
        vals = self.values
        times = self.sample_times

        def h(t, xs):
            j = int(np.argmin(np.abs(times - t)))
            row = vals[j]
            if xs.size == row.size:
                return row
            raise ValueError("control sampled on a different grid")

        return h


@dataclass
class ControlResult:
    control: SpaceTimeControl
    terminal_norm: float
    control_cost: float
    epsilon: float
    cg_iterations: int
    converged: bool
    v_T: np.ndarray  # optimal terminal adjoint data (full nodal vector)


class _DualOperator:
    """Matrix-free application of the control Gram operator plus penalty."""

    def __init__(self, spec: ProblemSpec, epsilon: float):
        self.spec = spec
        self.epsilon = epsilon
        self.stepper = _Stepper(spec)
        self.op = self.stepper.op
        self.mask = omega_node_mask(spec.mesh, spec.omega)[self.op.node_index]
        self.sample_t, self.taus = substep_times(spec)

    def adjoint_pairing(self, v_unknown: np.ndarray) -> list:
        full = self.op.embed(v_unknown)
        _, pairing, _ = _adjoint_march(
            self.spec, full, keep_pairing=True, stepper=self.stepper
        )
        return pairing

    def adjoint_initial_and_pairing(self, v_unknown: np.ndarray):
        full = self.op.embed(v_unknown)
        rows, pairing, _ = _adjoint_march(
            self.spec, full, keep_pairing=True, stepper=self.stepper
        )
        return self.op.restrict(rows[0]), pairing

    def control_from_pairing(self, pairing: list) -> np.ndarray:
        ctrl = np.array([np.where(self.mask, y, 0.0) for y in pairing])
        return ctrl

    def forward_terminal(self, u0_unknown: np.ndarray, ctrl: Optional[np.ndarray]):
        # march with per-substep control samples on the unknown nodes
        st = self.stepper
        op = self.op
        u = u0_unknown.copy()
        W = op.weights
        for j, sub in enumerate(st.subs):
            rhs = st.apply_R(j, u)
            if ctrl is not None:
                rhs = rhs + sub.tau * W * ctrl[j]
            u = st.solve_L(j, rhs)
        return u

    def gram_apply(self, v_unknown: np.ndarray) -> np.ndarray:
        pairing = self.adjoint_pairing(v_unknown)
        ctrl = self.control_from_pairing(pairing)
        lam_v = self.forward_terminal(np.zeros_like(v_unknown), ctrl)
        return lam_v + self.epsilon * v_unknown

    def control_cost(self, ctrl: np.ndarray) -> float:
        W = self.op.weights
        return float(sum(
            tau * np.dot(W * row, row) for tau, row in zip(self.taus, ctrl)
        ))


def _cg(apply_A, b, inner, tol: float, max_iter: int):
    """Conjugate gradients in the supplied inner product."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = inner(r, r)
    b_norm = np.sqrt(inner(b, b))
    if b_norm == 0.0:
        return x, 0, True
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        denom = inner(p, Ap)
        if denom <= 0.0:
            return x, it, False
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = inner(r, r)
        if np.sqrt(rs_new) <= tol * b_norm:
            return x, it, True
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, max_iter, False


def synthesize_null_control(
    spec: ProblemSpec,
    u0: np.ndarray,
    epsilon: float,
    cg_tol: float = 1e-8,
    cg_max_iter: int = 500,
) -> ControlResult:
    """Minimize the penalized dual functional and return the closed-loop result.

    Each conjugate-gradient iteration costs one backward and one forward
    solve.  The control is the restriction of the optimal adjoint profile to
    the control-region nodes; the returned terminal norm comes from an
    explicit forward verification solve.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if epsilon < MIN_PENALTY:
        raise ValueError(
            f"penalty underflow: epsilon={epsilon} is below {MIN_PENALTY}"
        )
    dual = _DualOperator(spec, epsilon)
    op = dual.op
    u0_unknown = op.restrict(u0)
    b = dual.forward_terminal(u0_unknown, None)  # free terminal state
    def inner(u, v):
        return op.inner(u, v)

    rhs = -b
    v_hat, iters, converged = _cg(dual.gram_apply, rhs, inner, cg_tol, cg_max_iter)

    pairing = dual.adjoint_pairing(v_hat)
    ctrl = dual.control_from_pairing(pairing)
    full_vals = np.array([op.embed(row) for row in ctrl])
    control = SpaceTimeControl(
        sample_times=dual.sample_t,
        taus=dual.taus,
        values=full_vals,
        omega=spec.omega,
    )
    u_T = dual.forward_terminal(u0_unknown, ctrl)
    terminal_norm = op.norm(u_T)
    cost = dual.control_cost(ctrl)
    return ControlResult(
        control=control,
        terminal_norm=terminal_norm,
        control_cost=cost,
        epsilon=epsilon,
        cg_iterations=iters,
        converged=converged,
        v_T=op.embed(v_hat),
    )


def verify_control(spec: ProblemSpec, u0: np.ndarray, control: SpaceTimeControl) -> float:
    """One forward solve with the synthesized control; returns the terminal norm."""
    from .pde_solver import assemble_diffusion

    op = assemble_diffusion(spec.coef, spec.mesh, spec.regime)
    ctrl_unknown = control.values[:, op.node_index]
    traj = solve_forward(spec, u0, control=ctrl_unknown)
    return op.norm(op.restrict(traj.values[-1]))


def dual_functional(
    spec: ProblemSpec, u0: np.ndarray, epsilon: float, v_T: np.ndarray
) -> float:
    """Value of the penalized dual functional at terminal adjoint data v_T."""
    dual = _DualOperator(spec, epsilon)
    op = dual.op
    v_unknown = op.restrict(v_T)
    v0, pairing = dual.adjoint_initial_and_pairing(v_unknown)
    ctrl = dual.control_from_pairing(pairing)
    u0_unknown = op.restrict(u0)
    return (
        0.5 * dual.control_cost(ctrl)
        + 0.5 * epsilon * op.inner(v_unknown, v_unknown)
        + op.inner(u0_unknown, v0)
    )


def dual_gradient(
    spec: ProblemSpec, u0: np.ndarray, epsilon: float, v_T: np.ndarray
) -> np.ndarray:
    """Gradient of the dual functional in the mesh-weighted inner product."""
    dual = _DualOperator(spec, epsilon)
    op = dual.op
    v_unknown = op.restrict(v_T)
    grad = dual.gram_apply(v_unknown) + dual.forward_terminal(op.restrict(u0), None)
    return op.embed(grad)
