"""Both sides of the weighted observability-type inequality, parameter sweeps
for the empirical constant, and the exactly checkable facts behind it: the
product-expansion identity of the conjugated operators and the sign of the
boundary flux term.

The conjugation replaces a backward solution v by w = exp(s*phi)*v, which
vanishes at both time endpoints; the second-order operator splits into a
symmetric part ``L+`` and a skew-ish part ``L-`` whose cross inner product
expands into seven exactly computable integrals.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .functionals import Region, spacetime_weighted_integral
from .pde_solver import (
    Direction,
    ProblemSpec,
    Trajectory,
    solve_adjoint,
)
from .sampling import (
    STREAM_SOURCE,
    STREAM_TERMINAL,
    sample_fields,
)
from .weights import CarlemanWeights

__all__ = [
    "CarlemanParams",
    "CarlemanReport",
    "WTransform",
    "SpaceTimeField",
    "SweepResult",
    "ObservabilityReport",
    "carleman_sides",
    "carleman_sweep",
    "stable_s0",
    "transform_to_w",
    "identity_residual",
    "boundary_sign_term",
    "observability_ratio",
    "standard_identity_fields",
]

DEGENERATE_DENOMINATOR = 1e-300


@dataclass(frozen=True)
class CarlemanParams:
    s: float
    lam: float

    def __post_init__(self):
        if self.s <= 0 or self.lam <= 0:
            raise ValueError("both parameters must be strictly positive")


@dataclass(frozen=True)
class CarlemanReport:
    """Per-(s, lambda) decomposition of the two sides of the inequality."""

    lhs_grad: float
    lhs_zero: float
    rhs_source: float
    rhs_local: float
    ratio: float
    params: CarlemanParams
    sample_id: int = 0
    degenerate: bool = False

    @property
    def lhs(self) -> float:
        return self.lhs_grad + self.lhs_zero

    @property
    def rhs(self) -> float:
        return self.rhs_source + self.rhs_local


def carleman_sides(
    spec: ProblemSpec,
    v_T: np.ndarray,
    F,
    weights: CarlemanWeights,
    params: CarlemanParams,
    sample_id: int = 0,
    zero_order_exponent: float = 5.0 / 3.0,
    traj: Optional[Trajectory] = None,
) -> CarlemanReport:
    """Solve the backward problem and evaluate the four weighted integrals.

    The left side carries (s*lam)*sigma on the gradient and
    (s*lam)**q * sigma**q (q = 5/3 by default) on the zero-order term; the
    right side carries the plain weighted source plus (s*lam)**3 * sigma**3
    localized on the control region.
    """
    if traj is None:
        if isinstance(F, Trajectory):
            raise ValueError(
                "pass the backward trajectory explicitly when the source is "
                "given as a grid field"
            )
        traj = solve_adjoint(spec, v_T, F=F)
    s, lam = params.s, params.lam
    sl = s * lam
    q = zero_order_exponent
    lhs_grad = sl * spacetime_weighted_integral(traj, weights, s, 1.0, "a_vx_sq", Region.Q)
    lhs_zero = sl**q * spacetime_weighted_integral(traj, weights, s, q, "v_sq", Region.Q)
    if F is None:
        rhs_source = 0.0
    else:
        f_traj = _field_on_grid(F, traj)
        rhs_source = spacetime_weighted_integral(
            f_traj, weights, s, 0.0, "source_sq", Region.Q
        )
    rhs_local = sl**3 * spacetime_weighted_integral(
        traj, weights, s, 3.0, "v_sq", Region.Q_OMEGA, omega=spec.omega
    )
    denom = rhs_source + rhs_local
    if denom < DEGENERATE_DENOMINATOR:
        return CarlemanReport(
            lhs_grad, lhs_zero, rhs_source, rhs_local, float("nan"), params,
            sample_id, degenerate=True,
        )
    return CarlemanReport(
        lhs_grad, lhs_zero, rhs_source, rhs_local,
        (lhs_grad + lhs_zero) / denom, params, sample_id,
    )


def _field_on_grid(F, traj: Trajectory) -> Trajectory:
    if isinstance(F, Trajectory):
        return F
    vals = np.empty_like(traj.values)
    ts = traj.times
    xs = traj.mesh.nodes
    for m, t in enumerate(ts):
        vals[m] = np.asarray(F(t, xs), dtype=float) * np.ones_like(xs)
    return Trajectory(vals, traj.mesh, traj.T, traj.direction)


def stable_s0(weights: CarlemanWeights) -> float:
    """Deterministic default threshold of the stable parameter region.

    Balances two requirements of the discrete sweep: the weighted local term
    must dominate the plain source term (activation: s*lam*theta_mid*eta_max
    a few times unity, placing the grid past the ratio's crossover peak),
    while the weight exponent at the profile hump must stay representable in
    double precision across four s-doublings.  Both are controlled by
    s0 = 4 * theta(T/2)^{-1} / (lam * eta_max), for which the top-of-sweep
    exponent is 128*(exp(lam*sup)-1)/lam, bounded for every admissible
    configuration.
    """
    T = weights.T
    theta_mid = (T * T / 4.0) ** -4
    eta_max = math.exp(2.0 * weights.lam * weights.psi_sup)
    return max(1.0, 4.0 / (theta_mid * weights.lam * eta_max))


@dataclass
class SweepResult:
    rows: list  # one dict per (sample, s, lambda)
    summary: dict

    def config_hash(self) -> str:
        return self.summary.get("config_sha256", "")


def carleman_sweep(
    spec: ProblemSpec,
    n_samples: int,
    s_grid: Sequence[float],
    lambda_grid: Sequence[float],
    seed: int,
    omega_prime: Optional[tuple] = None,
    s_relative: bool = False,
    zero_order_exponent: float = 5.0 / 3.0,
    quad_points: int = 12,
    bridge_degree: int = 5,
    jobs: int = 1,
) -> SweepResult:
    """Cross product of seeded samples, s values and lambda values.

    With ``s_relative`` the entries of ``s_grid`` multiply the per-lambda
    stable threshold.  Backward solves are shared across (s, lambda) because
    the trajectories do not depend on the weight parameters; ``jobs`` caps
    the worker threads that fan the solves out.  Results are merged by sample
    index, so the output is deterministic regardless of execution order.
    """
    from .weights import build_weights, default_omega_prime

    if n_samples < 1:
        raise ValueError("need at least one sample")
    if len(s_grid) == 0 or len(lambda_grid) == 0:
        raise ValueError("parameter grids must be nonempty")
    if omega_prime is None:
        omega_prime = default_omega_prime(spec.omega)

    nodes = spec.mesh.nodes
    vt_fields = sample_fields(seed, STREAM_TERMINAL, n_samples, nodes)
    f_fields = sample_fields(seed, STREAM_SOURCE, n_samples, nodes)

    def solve_sample(i: int):
        f_row = f_fields[i]
        F = lambda t, xs, row=f_row: row if xs.size == row.size else np.interp(xs, nodes, row)
        return solve_adjoint(spec, vt_fields[i], F=F)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(solve_sample, range(n_samples)))
    else:
        trajectories = [solve_sample(i) for i in range(n_samples)]
    f_trajs = []
    for i in range(n_samples):
        fv = np.tile(f_fields[i], (spec.time_steps + 1, 1))
        f_trajs.append(Trajectory(fv, spec.mesh, spec.T, Direction.BACKWARD))

    rows = []
    summaries = []
    excluded = 0
    empirical = 0.0
    for lam in lambda_grid:
        wts = build_weights(
            spec.coef, lam, spec.T, omega_prime[0], omega_prime[1], quad_points,
            bridge_degree,
        )
        s0 = stable_s0(wts)
        for si, s_entry in enumerate(s_grid):
            s = s_entry * s0 if s_relative else s_entry
            params = CarlemanParams(s, lam)
            ratios = []
            for i in range(n_samples):
                rep = carleman_sides(
                    spec,
                    vt_fields[i],
                    f_trajs[i],
                    wts,
                    params,
                    sample_id=i,
                    zero_order_exponent=zero_order_exponent,
                    traj=trajectories[i],
                )
                rows.append(
                    {
                        "sample": i,
                        "s": s,
                        "lambda": lam,
                        "lhs_grad": rep.lhs_grad,
                        "lhs_zero": rep.lhs_zero,
                        "rhs_source": rep.rhs_source,
                        "rhs_local": rep.rhs_local,
                        "ratio": rep.ratio,
                    }
                )
                if rep.degenerate:
                    excluded += 1
                else:
                    ratios.append(rep.ratio)
            if ratios:
                mx = float(np.max(ratios))
                med = float(np.median(ratios))
                empirical = max(empirical, mx)
            else:
                mx = med = float("nan")
            summaries.append(
                {
                    "s": s,
                    "s_index": si,
                    "lambda": lam,
                    "s0": s0,
                    "max_ratio": mx,
                    "median_ratio": med,
                    "n_valid": len(ratios),
                }
            )

    config = {
        "T": spec.T,
        "N": spec.mesh.n_cells,
        "M": spec.time_steps,
        "omega": list(spec.omega),
        "omega_prime": list(omega_prime),
        "coefficient": spec.coef.descriptor,
        "s_grid": list(map(float, s_grid)),
        "s_relative": s_relative,
        "lambda_grid": list(map(float, lambda_grid)),
        "n_samples": n_samples,
        "seed": seed,
        "zero_order_exponent": zero_order_exponent,
        "bridge_degree": bridge_degree,
    }
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()
    summary = {
        "empirical_C": empirical,
        "excluded_count": excluded,
        "per_point": summaries,
        "config_sha256": digest,
        "config": config,
    }
    return SweepResult(rows=rows, summary=summary)


# --------------------------------------------------------------------------------
# conjugated-operator checks


@dataclass(frozen=True)
class SpaceTimeField:
    """Smooth separable field q(t)*g(x) with analytic derivatives, used to
    manufacture test functions for the exact identity."""

    name: str
    w: Callable
    w_t: Callable
    w_x: Callable
    w_xx: Callable
    dirichlet_at_zero: bool


def _time_envelope(T: float):
    """[t(T-t)]^7 normalized to peak 1.

    The seventh power beats the cube of the time blow-up factor with two
    orders to spare, so every integrand in the identity is twice continuously
    differentiable up to the endpoints and the trapezoid rule keeps its
    second-order accuracy."""
    peak = (T * T / 4.0) ** 7

    def q(t):
        g = t * (T - t)
        return g**7 / peak

    def qp(t):
        g = t * (T - t)
        return 7.0 * g**6 * (T - 2.0 * t) / peak

    return q, qp


def standard_identity_fields(T: float, dirichlet_at_zero: bool) -> list[SpaceTimeField]:
    """Three manufactured fields per boundary family.

    The value-pinned family vanishes at both space endpoints; the flux family
    is free at x = 0 (the degenerate coefficient kills the flux there) and
    vanishes at x = 1.
    """
    q, qp = _time_envelope(T)
    pi = np.pi
    if dirichlet_at_zero:
        gs = [
            ("sin_pi", lambda x: np.sin(pi * x), lambda x: pi * np.cos(pi * x),
             lambda x: -pi * pi * np.sin(pi * x)),
            ("bump", lambda x: x * (1.0 - x), lambda x: 1.0 - 2.0 * x,
             lambda x: -2.0 * np.ones_like(x)),
            ("two_mode",
             lambda x: np.sin(pi * x) + 0.5 * np.sin(3 * pi * x),
             lambda x: pi * np.cos(pi * x) + 1.5 * pi * np.cos(3 * pi * x),
             lambda x: -pi * pi * np.sin(pi * x) - 4.5 * pi * pi * np.sin(3 * pi * x)),
        ]
    else:
        gs = [
            ("cos_half", lambda x: np.cos(0.5 * pi * x),
             lambda x: -0.5 * pi * np.sin(0.5 * pi * x),
             lambda x: -0.25 * pi * pi * np.cos(0.5 * pi * x)),
            ("sq_decay", lambda x: (1.0 - x) ** 2,
             lambda x: -2.0 * (1.0 - x),
             lambda x: 2.0 * np.ones_like(x)),
            ("two_mode_flux",
             lambda x: np.cos(0.5 * pi * x) + 0.5 * np.cos(1.5 * pi * x),
             lambda x: -0.5 * pi * np.sin(0.5 * pi * x) - 0.75 * pi * np.sin(1.5 * pi * x),
             lambda x: -0.25 * pi * pi * np.cos(0.5 * pi * x) - 1.125 * pi * pi * np.cos(1.5 * pi * x)),
        ]
    fields = []
    for name, g, gx, gxx in gs:
        fields.append(
            SpaceTimeField(
                name=name,
                w=lambda t, x, g=g: q(t) * g(x),
                w_t=lambda t, x, g=g: qp(t) * g(x),
                w_x=lambda t, x, gx=gx: q(t) * gx(x),
                w_xx=lambda t, x, gxx=gxx: q(t) * gxx(x),
                dirichlet_at_zero=dirichlet_at_zero,
            )
        )
    return fields


def _mapped_simpson(x_lo: float, x_hi: float, n: int, power: float = 1.0):
    """Composite Simpson weights for x = x_lo + (x_hi - x_lo) * u**power on a
    uniform u-grid; the optional cubic map grades nodes toward x_lo."""
    n = n + (n % 2)
    u = np.arange(n + 1) / n
    span = x_hi - x_lo
    nodes = x_lo + span * u**power
    dxdu = span * power * u ** (power - 1.0) if power != 1.0 else np.full(u.size, span)
    S = np.ones(n + 1)
    S[1:-1:2] = 4.0
    S[2:-1:2] = 2.0
    return nodes, S * dxdu / (3.0 * n)


def _grids(weights: CarlemanWeights, resolution: int):
    """Quadrature grids for the identity check.

    The x-grid is composite: cubically graded toward the degenerate endpoint
    (resolving the root-type curvature of the exponential space factor),
    fine across the bridge (where the joined profile has its largest
    curvature), uniform beyond it; each section carries mapped composite
    Simpson weights.  The join abscissae appear once per adjacent segment,
    nudged onto the segment's side, because the third profile derivative
    jumps there and each section must integrate its own one-sided values.
    """
    ap, bp = weights.psi.alpha_prime, weights.psi.beta_prime
    n_left = max(resolution // 5, 8)
    n_right = max(resolution // 5, 8)
    n_mid = max(resolution - n_left - n_right, 8)
    nudge = 1e-12
    left, wl = _mapped_simpson(0.0, ap, n_left, power=3.0)
    mid, wm = _mapped_simpson(ap * (1.0 + nudge), bp * (1.0 - nudge), n_mid)
    right, wr = _mapped_simpson(bp, 1.0, n_right)
    xs = np.concatenate([left, mid, right])
    xw = np.concatenate([wl, wm, wr])
    ts = np.linspace(0.0, weights.T, resolution + 1)
    tw = np.full(ts.size, weights.T / resolution)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    return ts, xs, tw, xw


def identity_residual(
    field: SpaceTimeField,
    weights: CarlemanWeights,
    params: CarlemanParams,
    resolution: int = 256,
) -> float:
    """Relative quadrature residual of the exact cross-term expansion.

    The inner product of the conjugated operator parts is integrated directly
    and compared with its seven-term expansion; every weight derivative is
    analytic, so the residual isolates pure quadrature error and must shrink
    under refinement.
    """
    if weights.coef.eval_deriv2 is None:
        raise ValueError(
            "the identity check needs a coefficient with an analytic second "
            "derivative; tabulated coefficients are not smooth enough"
        )
    s, lam = params.s, params.lam
    T = weights.T
    ts, xs, tw, xw = _grids(weights, resolution)

    wv = np.asarray(field.w(ts[:, None], xs[None, :]), dtype=float)
    scale = float(np.max(np.abs(wv))) + 1e-300
    if field.dirichlet_at_zero:
        if np.max(np.abs(wv[:, 0])) > 1e-9 * scale:
            raise ValueError("field violates the value condition at x = 0")
    if np.max(np.abs(wv[:, -1])) > 1e-9 * scale:
        raise ValueError("field violates the value condition at x = 1")
    if max(np.max(np.abs(wv[0])), np.max(np.abs(wv[-1]))) > 1e-9 * scale:
        raise ValueError("field must vanish at both time endpoints")

    wt = np.asarray(field.w_t(ts[:, None], xs[None, :]), dtype=float)
    wx = np.asarray(field.w_x(ts[:, None], xs[None, :]), dtype=float)
    wxx = np.asarray(field.w_xx(ts[:, None], xs[None, :]), dtype=float)

    comp = weights.space_composites(xs)
    eta, a, ap = comp["eta"], comp["a"], comp["ap"]
    c1, c1p, c1pp = comp["c1"], comp["c1p"], comp["c1pp"]
    c2, c3x, c4, c5 = comp["c2"], comp["c3x"], comp["c4"], comp["c5"]
    em = eta - weights.c3

    th = np.zeros(ts.size)
    th1 = np.zeros(ts.size)
    th2 = np.zeros(ts.size)
    inner = (ts > 0.0) & (ts < T)
    th[inner], th1[inner], th2[inner] = weights._theta_parts(ts[inner])
    # endpoint rows: the field's fifth-power envelope beats every blow-up, so
    # all weighted rows vanish in the limit
    def tx(trow, xrow):
        return trow[:, None] * xrow[None, :]

    def integrate(f):
        return float(np.einsum("m,mi,i->", tw, f, xw))

    phi_t = tx(th1, em)
    phi_x_sq_a = tx(th * th, lam * lam * eta * eta * c2)  # a*phi_x^2
    a_wx_x = ap[None, :] * wx + a[None, :] * wxx
    l_plus = -s * phi_t * wv + s * s * phi_x_sq_a * wv + a_wx_x
    a_phi_x = tx(th, lam * eta * c1)
    a_phi_x_x = tx(th, lam * eta * (lam * c2 + c1p))
    l_minus = wt - s * a_phi_x_x * wv - 2.0 * s * a_phi_x * wx
    lhs = integrate(l_plus * l_minus)

    t1 = 0.5 * s * integrate(tx(th2, em) * wv * wv)
    t2 = -2.0 * s * s * integrate(tx(th1 * th, lam * lam * eta * eta * c2) * wv * wv)
    t3 = s**3 * integrate(
        tx(th**3, lam**3 * eta**3 * (2.0 * lam * c2 * c2 + c5)) * wv * wv
    )
    a_phi_x_xx_a = tx(
        th, lam * eta * (lam * c1 * (lam * c2 + c1p) + lam * c3x + a * c1pp)
    )
    t4 = s * integrate(a_phi_x_xx_a * wv * wx)
    t5 = 2.0 * s * integrate(a_phi_x_x * a[None, :] * wx * wx)
    t6 = -s * integrate(tx(th, lam * eta * c4) * wx * wx)
    # boundary flux term: a^2 phi_x wx^2 evaluated at the two space endpoints
    bndry = th * lam * (
        eta[-1] * a[-1] * c1[-1] * wx[:, -1] ** 2
        - eta[0] * a[0] * c1[0] * wx[:, 0] ** 2
    )
    t7 = -s * float(np.dot(tw, bndry))

    total = t1 + t2 + t3 + t4 + t5 + t6 + t7
    denom = sum(abs(v) for v in (t1, t2, t3, t4, t5, t6, t7)) + 1.0
    return abs(lhs - total) / denom


@dataclass
class WTransform:
    """Conjugated field w = exp(s*phi)*v with discrete operator parts."""

    w: np.ndarray  # (M+1, N+1)
    l_plus: np.ndarray  # (M-1, N-1) interior evaluations
    l_minus: np.ndarray
    params: CarlemanParams
    mesh: object
    T: float


def transform_to_w(
    v_traj: Trajectory, weights: CarlemanWeights, params: CarlemanParams
) -> WTransform:
    """Conjugate a backward trajectory and evaluate the split operators on the
    interior grid (centered differences in both variables)."""
    s, lam = params.s, params.lam
    mesh = v_traj.mesh
    xs = mesh.nodes
    ts = v_traj.times
    T = v_traj.T
    E = weights.exp_s_phi_grid(ts, xs, s)
    w = E * v_traj.values

    comp = weights.space_composites(xs)
    eta, a, ap = comp["eta"], comp["a"], comp["ap"]
    c1, c1p, c2 = comp["c1"], comp["c1p"], comp["c2"]
    em = eta - weights.c3
    inner_t = slice(1, ts.size - 1)
    th, th1, _ = weights._theta_parts(ts[inner_t])
    k = ts[1] - ts[0]

    wt = (w[2:, :] - w[:-2, :]) / (2.0 * k)
    h = mesh.spacings
    flux = np.asarray(weights.coef.eval(mesh.faces), dtype=float)[None, :] * np.diff(
        w, axis=1
    ) / h[None, :]
    vol = mesh.volumes[1:-1]
    awx_x = (flux[:, 1:] - flux[:, :-1]) / vol[None, :]
    wx = (w[:, 2:] - w[:, :-2]) / (xs[2:] - xs[:-2])[None, :]

    ii = slice(1, xs.size - 1)
    phi_t = th1[:, None] * em[None, ii]
    aphx2 = (th**2)[:, None] * (lam * lam * eta * eta * c2)[None, ii]
    l_plus = (
        -s * phi_t * w[inner_t, ii]
        + s * s * aphx2 * w[inner_t, ii]
        + awx_x[inner_t]
    )
    a_phi_x = th[:, None] * (lam * eta * c1)[None, ii]
    a_phi_x_x = th[:, None] * (lam * eta * (lam * c2 + c1p))[None, ii]
    l_minus = wt[:, ii] - s * a_phi_x_x * w[inner_t, ii] - 2.0 * s * a_phi_x * wx[inner_t]
    return WTransform(w, l_plus, l_minus, params, mesh, T)


@dataclass(frozen=True)
class BoundaryTerm:
    term: float
    scale: float


def boundary_sign_term(
    wt: WTransform, weights: CarlemanWeights, params: CarlemanParams
) -> BoundaryTerm:
    """Discrete boundary flux term -s * int (a^2 phi_x w_x^2) |_{x=0}^{x=1} dt.

    One-sided gradients approximate w_x at the endpoints; the profile slope is
    negative at x = 1 and the degenerate factor kills the x = 0 trace, so the
    term is nonnegative up to discretization noise.
    """
    s = params.s
    lam = params.lam
    mesh = wt.mesh
    xs = mesh.nodes
    M = wt.w.shape[0] - 1
    ts = np.linspace(0.0, wt.T, M + 1)
    tw = np.full(M + 1, wt.T / M)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    h = mesh.spacings
    wx0 = (wt.w[:, 1] - wt.w[:, 0]) / h[0]
    wx1 = (wt.w[:, -1] - wt.w[:, -2]) / h[-1]
    comp = weights.space_composites(np.array([xs[0], xs[-1]]))
    a = comp["a"]
    c1 = comp["c1"]
    eta = comp["eta"]
    th = np.zeros(M + 1)
    inner = (ts > 0.0) & (ts < wt.T)
    th[inner] = weights._theta_parts(ts[inner])[0]
    at1 = th * lam * eta[1] * a[1] * c1[1] * wx1 * wx1
    at0 = th * lam * eta[0] * a[0] * c1[0] * wx0 * wx0
    term = -s * float(np.dot(tw, at1 - at0))
    scale = s * float(np.dot(tw, np.abs(at1) + np.abs(at0))) + 1e-300
    return BoundaryTerm(term=term, scale=scale)


@dataclass
class ObservabilityReport:
    constant: float
    ratios: list
    excluded_count: int


def observability_ratio(
    spec: ProblemSpec,
    weights: Optional[CarlemanWeights] = None,
    n_samples: int = 20,
    seed: int = 0,
) -> ObservabilityReport:
    """Empirical observability constant: the largest ratio of the initial-time
    energy to the control-region energy over seeded source-free backward
    solves."""
    if weights is not None and abs(weights.T - spec.T) > 1e-12 * max(1.0, spec.T):
        raise ValueError("weights and spec disagree on the horizon")
    nodes = spec.mesh.nodes
    vols = spec.mesh.volumes
    vt_fields = sample_fields(seed, STREAM_TERMINAL, n_samples, nodes)
    a_mask_lo, a_mask_hi = spec.omega
    from .functionals import _clipped_node_quadrature

    xw_omega = _clipped_node_quadrature(nodes, a_mask_lo, a_mask_hi)
    M = spec.time_steps
    tw = np.full(M + 1, spec.T / M)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    ratios = []
    excluded = 0
    for i in range(n_samples):
        traj = solve_adjoint(spec, vt_fields[i], F=None)
        v0 = traj.values[0]
        num = float(np.sum(vols * v0 * v0))
        sq = traj.values * traj.values
        den = float(np.einsum("m,mi,i->", tw, sq, xw_omega))
        if den < DEGENERATE_DENOMINATOR:
            excluded += 1
            continue
        ratios.append(num / den)
    constant = float(np.max(ratios)) if ratios else float("nan")
    return ObservabilityReport(constant=constant, ratios=ratios, excluded_count=excluded)
