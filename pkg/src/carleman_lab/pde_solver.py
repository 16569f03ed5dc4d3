"""Flux-form finite differences for the forward and backward degenerate
diffusion problems, with an adjoint solver that is the exact discrete
transpose of the forward step map.

The left boundary either pins the value to zero (weak band) or imposes a
vanishing flux (strong band); the right boundary always pins the value.
Time marching is Crank-Nicolson with implicit-Euler half-step startup at both
ends of the schedule (keeping it palindromic, hence self-adjoint for c = 0),
or plain backward Euler.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import DegeneracyCoefficient, HypothesisReport, Regime

__all__ = [
    "Mesh",
    "LeftBoundary",
    "BoundaryRegime",
    "Scheme",
    "ProblemSpec",
    "Trajectory",
    "Direction",
    "DiffusionOperator",
    "build_mesh",
    "assemble_diffusion",
    "boundary_regime_for",
    "solve_forward",
    "solve_adjoint",
    "energy_report",
    "substep_times",
    "omega_node_mask",
    "trajectory_to_csv",
    "trajectory_to_binary",
    "trajectory_from_binary",
]


@dataclass(frozen=True)
class Mesh:
    """Graded 1-d mesh on [0, 1] clustering nodes at the degenerate endpoint."""

    nodes: np.ndarray
    grading_exponent: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("mesh needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def faces(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def volumes(self) -> np.ndarray:
        """Trapezoid/control-volume weights per node (the discrete measure)."""
        h = self.spacings
        w = np.empty(self.nodes.size)
        w[0] = 0.5 * h[0]
        w[-1] = 0.5 * h[-1]
        w[1:-1] = 0.5 * (h[:-1] + h[1:])
        return w


def build_mesh(N: int, grading_exponent: float = 2.0) -> Mesh:
    """Nodes (i/N)**g, clustering at x = 0 for g > 1."""
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    if not 1.0 <= grading_exponent <= 4.0:
        raise ValueError(f"grading_exponent must lie in [1, 4], got {grading_exponent}")
    i = np.arange(N + 1, dtype=float)
    return Mesh((i / N) ** grading_exponent, grading_exponent)


class LeftBoundary(Enum):
    DIRICHLET_ZERO = "dirichlet_zero"
    ZERO_FLUX = "zero_flux"


@dataclass(frozen=True)
class BoundaryRegime:
    """Left boundary condition; the right boundary always pins the value to 0."""

    left: LeftBoundary


def boundary_regime_for(
    hypothesis: HypothesisReport, override: Optional[LeftBoundary] = None
) -> BoundaryRegime:
    """Conventional pairing: value condition for the weak band, flux condition
    for the strong band.  An explicit override wins."""
    if override is not None:
        return BoundaryRegime(override)
    if hypothesis.regime is Regime.WDC:
        return BoundaryRegime(LeftBoundary.DIRICHLET_ZERO)
    if hypothesis.regime is Regime.SDC:
        return BoundaryRegime(LeftBoundary.ZERO_FLUX)
    raise ValueError("cannot choose a boundary regime for an inadmissible coefficient")


class Scheme(Enum):
    BACKWARD_EULER = "backward_euler"
    CRANK_NICOLSON = "crank_nicolson"


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class ProblemSpec:
    """Everything needed to march one trajectory."""

    T: float
    coef: DegeneracyCoefficient
    regime: BoundaryRegime
    mesh: Mesh
    time_steps: int
    omega: tuple[float, float]
    c: Optional[Callable] = None  # potential c(t, x), bounded; None means 0
    scheme: Scheme = Scheme.CRANK_NICOLSON
    hypothesis: Optional[HypothesisReport] = None
    boundary_override: bool = False

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.time_steps < 1:
            raise ValueError("need at least one time step")
        a, b = self.omega
        if not 0.0 < a < b < 1.0:
            raise ValueError(f"omega must satisfy 0 < a < b < 1, got {self.omega}")
        if self.hypothesis is not None and not self.boundary_override:
            expect = boundary_regime_for(self.hypothesis)
            if expect != self.regime:
                raise ValueError(
                    f"boundary regime {self.regime.left.value} conflicts with the "
                    f"certified band {self.hypothesis.regime.value}; pass "
                    "boundary_override=True to keep it"
                )

    @property
    def dt(self) -> float:
        return self.T / self.time_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.time_steps + 1)


@dataclass
class Trajectory:
    """Space-time field on the uniform step grid, boundary rows included."""

    values: np.ndarray  # (M+1, N+1)
    mesh: Mesh
    T: float
    direction: Direction

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.values.shape[0])


class DiffusionOperator:
    """Symmetric stiffness of the flux-form operator -(a u_x)_x on the unknown
    nodes, together with the node measure.

    The operator acting on nodal vectors is W^{-1} S, self-adjoint and
    positive semidefinite in the measure-weighted inner product.
    """

    def __init__(self, coef: DegeneracyCoefficient, mesh: Mesh, regime: BoundaryRegime):
        nodes = mesh.nodes
        n_nodes = nodes.size
        faces = mesh.faces
        h = mesh.spacings
        a_faces = np.asarray(coef.eval(faces), dtype=float)
        if np.any(a_faces <= 0.0) or not np.all(np.isfinite(a_faces)):
            raise ValueError("coefficient must be positive at every interior face")
        cond = a_faces / h

        zero_flux = regime.left is LeftBoundary.ZERO_FLUX
        start = 0 if zero_flux else 1
        idx = np.arange(start, n_nodes - 1)  # unknown node indices
        n = idx.size
        diag = np.zeros(n)
        off = np.zeros(max(n - 1, 0))
        # interior faces couple unknown pairs; boundary faces only load the diagonal
        for f in range(n_nodes - 1):
            li, ri = f, f + 1
            lu = li - start
            ru = ri - start
            l_in = 0 <= lu < n
            r_in = 0 <= ru < n
            if l_in:
                diag[lu] += cond[f]
            if r_in:
                diag[ru] += cond[f]
            if l_in and r_in:
                off[lu] -= cond[f]
        self.coef = coef
        self.mesh = mesh
        self.regime = regime
        self.node_index = idx
        self.diag = diag
        self.off = off
        self.weights = mesh.volumes[idx]
        self.a_faces = a_faces

    @property
    def n_unknowns(self) -> int:
        return self.node_index.size

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        """W^{-1} S u on unknown vectors: the discrete -(a u_x)_x."""
        return self.stiffness_apply(u) / self.weights

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full, dtype=float)[self.node_index]

    def embed(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mesh.nodes.size)
        full[self.node_index] = u
        return full

    def apply_full(self, full: np.ndarray) -> np.ndarray:
        return self.embed(self.apply(self.restrict(full)))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(self.weights * u, v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def assemble_diffusion(
    coef: DegeneracyCoefficient, mesh: Mesh, regime: BoundaryRegime
) -> DiffusionOperator:
    """Assemble the flux-form stiffness with pointwise face evaluation of a."""
    return DiffusionOperator(coef, mesh, regime)


# --------------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True)
class _Substep:
    t0: float
    tau: float
    implicit: float  # 1.0 backward Euler, 0.5 Crank-Nicolson
    t_sample: float  # where c, controls and sources are sampled


def _substep_schedule(spec: ProblemSpec) -> list[_Substep]:
    """Palindromic schedule: plain steps for backward Euler; Crank-Nicolson with
    two implicit-Euler half-steps at each end of the horizon otherwise."""
    k = spec.dt
    M = spec.time_steps
    subs: list[_Substep] = []
    for m in range(M):
        t0 = m * k
        if spec.scheme is Scheme.BACKWARD_EULER:
            subs.append(_Substep(t0, k, 1.0, t0 + k))
        elif M >= 3 and (m == 0 or m == M - 1):
            subs.append(_Substep(t0, 0.5 * k, 1.0, t0 + 0.5 * k))
            subs.append(_Substep(t0 + 0.5 * k, 0.5 * k, 1.0, t0 + k))
        else:
            subs.append(_Substep(t0, k, 0.5, t0 + 0.5 * k))
    return subs


def substep_times(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """(sample times, substep lengths) of the marching schedule; per-substep
    control fields must align with these."""
    subs = _substep_schedule(spec)
    return (
        np.array([s.t_sample for s in subs]),
        np.array([s.tau for s in subs]),
    )


def omega_node_mask(mesh: Mesh, omega: tuple[float, float]) -> np.ndarray:
    """Sharp indicator of nodes strictly inside the control region."""
    a, b = omega
    return (mesh.nodes > a) & (mesh.nodes < b)


class _Stepper:
    """Precomputed substep matrices L = W + th*tau*G and R = W - (1-th)*tau*G
    with G = S + W*diag(c), plus the banded forms for the solves."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.op = assemble_diffusion(spec.coef, spec.mesh, spec.regime)
        self.subs = _substep_schedule(spec)
        self.xs_unknown = spec.mesh.nodes[self.op.node_index]
        W = self.op.weights
        n = self.op.n_unknowns
        self.L_banded = []
        self.R_diag = []
        self.R_off = []
        cache: dict = {}
        for sub in self.subs:
            if spec.c is None:
                key = (sub.tau, sub.implicit)
            else:
                key = None
            if key is not None and key in cache:
                Lb, Rd, Ro = cache[key]
            else:
                cvals = (
                    np.zeros(n)
                    if spec.c is None
                    else np.asarray(spec.c(sub.t_sample, self.xs_unknown), dtype=float)
                    * np.ones(n)
                )
                g_diag = self.op.diag + W * cvals
                g_off = self.op.off
                th = sub.implicit
                Ld = W + th * sub.tau * g_diag
                Lo = th * sub.tau * g_off
                Rd = W - (1.0 - th) * sub.tau * g_diag
                Ro = -(1.0 - th) * sub.tau * g_off
                Lb = np.zeros((3, n))
                Lb[0, 1:] = Lo
                Lb[1] = Ld
                Lb[2, :-1] = Lo
                if key is not None:
                    cache[key] = (Lb, Rd, Ro)
            self.L_banded.append(Lb)
            self.R_diag.append(Rd)
            self.R_off.append(Ro)

    def solve_L(self, j: int, rhs: np.ndarray) -> np.ndarray:
        try:
            return solve_banded((1, 1), self.L_banded[j], rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - pathological c
            raise ValueError("non-SPD step matrix: time step or potential pathological") from exc

    def apply_R(self, j: int, u: np.ndarray) -> np.ndarray:
        out = self.R_diag[j] * u
        ro = self.R_off[j]
        if isinstance(ro, np.ndarray) and ro.size:
            out[:-1] += ro * u[1:]
            out[1:] += ro * u[:-1]
        return out


def _sample_field(field, t: float, xs: np.ndarray, j: int) -> np.ndarray:
    if field is None:
        return None
    if callable(field):
        return np.asarray(field(t, xs), dtype=float) * np.ones_like(xs)
    arr = np.asarray(field, dtype=float)
    return arr[j]


def solve_forward(
    spec: ProblemSpec,
    u0: np.ndarray,
    control=None,
    source=None,
) -> Trajectory:
    """March the controlled forward problem from u0.

    ``control`` acts only through the nodes strictly inside omega (sharp
    indicator); ``source`` is an unrestricted right-hand side.  Either may be
    a callable (t, x) -> value or an array of per-substep samples aligned with
    ``substep_times``.
    """
    st = _Stepper(spec)
    op = st.op
    mesh = spec.mesh
    M = spec.time_steps
    mask = omega_node_mask(mesh, spec.omega)[op.node_index]
    u = op.restrict(u0)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial data must be finite")
    rows = np.zeros((M + 1, mesh.nodes.size))
    rows[0] = op.embed(u)
    xs = st.xs_unknown
    W = op.weights
    k = spec.dt
    m = 1
    t_acc = 0.0
    for j, sub in enumerate(st.subs):
        rhs = st.apply_R(j, u)
        g = np.zeros_like(u)
        ctrl = _sample_field(control, sub.t_sample, xs, j)
        if ctrl is not None:
            g += np.where(mask, ctrl, 0.0)
        src = _sample_field(source, sub.t_sample, xs, j)
        if src is not None:
            g += src
        if g.any():
            rhs = rhs + sub.tau * W * g
        u = st.solve_L(j, rhs)
        t_acc += sub.tau
        if abs(t_acc - m * k) < 1e-12 * max(1.0, spec.T):
            rows[m] = op.embed(u)
            m += 1
    return Trajectory(rows, mesh, spec.T, Direction.FORWARD)


def _adjoint_march(spec: ProblemSpec, v_T: np.ndarray, F=None, keep_pairing=False, stepper=None):
    """Backward recursion that is the exact measure-weighted transpose of the
    forward step map.  Returns (rows, pairing) where pairing[j] is the
    intermediate profile that multiplies substep-j sources in the duality sum."""
    st = stepper if stepper is not None else _Stepper(spec)
    op = st.op
    M = spec.time_steps
    W = op.weights
    xs = st.xs_unknown
    k = spec.dt
    v = op.restrict(v_T)
    if not np.all(np.isfinite(v)):
        raise ValueError("terminal data must be finite")
    rows = np.zeros((M + 1, spec.mesh.nodes.size))
    rows[M] = op.embed(v)
    z = W * v
    pairing = [None] * len(st.subs) if keep_pairing else None
    m = M - 1
    t_acc = spec.T
    for j in range(len(st.subs) - 1, -1, -1):
        sub = st.subs[j]
        y = st.solve_L(j, z)
        if keep_pairing:
            pairing[j] = y
        z = st.apply_R(j, y)
        Fj = _sample_field(F, sub.t_sample, xs, j)
        if Fj is not None:
            # implicit-side deposit: raw tau*W*F leaves a first-order residue
            # on stiff source modes, the L-solve restores the scheme's order
            z = z - sub.tau * W * st.solve_L(j, W * Fj)
        t_acc -= sub.tau
        if m >= 0 and abs(t_acc - m * k) < 1e-12 * max(1.0, spec.T):
            rows[m] = op.embed(z / W)
            m -= 1
    return rows, pairing, st


def solve_adjoint(spec: ProblemSpec, v_T: np.ndarray, F=None) -> Trajectory:
    """March the backward problem from terminal data v_T with source F.

    Implemented as the exact transpose of ``solve_forward``'s step map, so the
    discrete duality pairing with forward solutions holds to rounding.
    """
    rows, _, _ = _adjoint_march(spec, v_T, F=F, keep_pairing=False)
    return Trajectory(rows, spec.mesh, spec.T, Direction.BACKWARD)


def energy_report(spec: ProblemSpec, u0: np.ndarray, h=None) -> float:
    """Ratio of the trajectory energy to the data energy.

    Numerator: sup_t of the weighted first-order norm squared plus the time
    integrals of |u_t|^2 and |(a u_x)_x|^2.  Denominator: the same first-order
    norm of u0 plus the control energy on the control cylinder.
    """
    st = _Stepper(spec)
    op = st.op
    traj = solve_forward(spec, u0, control=h)
    vals = traj.values[:, op.node_index]
    mesh = spec.mesh
    W = op.weights
    faces_a = op.a_faces
    hsp = mesh.spacings
    k = spec.dt

    def h1a_sq(full_row):
        grad = np.diff(full_row) / hsp
        semi = float(np.sum(faces_a * grad * grad * hsp))
        l2 = float(np.sum(mesh.volumes * full_row * full_row))
        return l2 + semi

    h1_rows = [h1a_sq(traj.values[m]) for m in range(vals.shape[0])]
    ut_sq = 0.0
    for m in range(vals.shape[0] - 1):
        du = (vals[m + 1] - vals[m]) / k
        ut_sq += k * float(np.dot(W * du, du))
    au_sq = 0.0
    tw = np.full(vals.shape[0], k)
    tw[0] = tw[-1] = 0.5 * k
    for m in range(vals.shape[0]):
        Au = op.apply(vals[m])
        au_sq += tw[m] * float(np.dot(W * Au, Au))
    lhs = max(h1_rows) + ut_sq + au_sq

    rhs = h1a_sq(np.asarray(u0, dtype=float))
    if h is not None:
        mask = omega_node_mask(mesh, spec.omega)[op.node_index]
        xs = st.xs_unknown
        for j, sub in enumerate(st.subs):
            g = _sample_field(h, sub.t_sample, xs, j)
            g = np.where(mask, g, 0.0)
            rhs += sub.tau * float(np.dot(W * g, g))

    if rhs <= 0.0:
        if lhs > 1e-12:
            raise ValueError("inconsistent energy report: zero data but nonzero trajectory")
        return 0.0
    return lhs / rhs


# --------------------------------------------------------------------------------
# export formats

_BIN_HEADER = struct.Struct("<qqd")


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Rows (t, x, value), deterministic shortest round-trip formatting."""
    times = traj.times
    nodes = traj.mesh.nodes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,x,value\n")
        for m, t in enumerate(times):
            row = traj.values[m]
            for i, x in enumerate(nodes):
                fh.write(f"{t:.17g},{x:.17g},{row[i]:.17g}\n")


def trajectory_to_binary(traj: Trajectory, path) -> None:
    """Header (int64 N, int64 M, float64 T) then row-major doubles."""
    M = traj.values.shape[0] - 1
    N = traj.values.shape[1] - 1
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(N, M, traj.T))
        fh.write(np.ascontiguousarray(traj.values, dtype="<f8").tobytes())


def trajectory_from_binary(path) -> dict:
    """Read the compact grid format back; the mesh travels separately."""
    with open(path, "rb") as fh:
        N, M, T = _BIN_HEADER.unpack(fh.read(_BIN_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(M + 1, N + 1)
    return {"N": int(N), "M": int(M), "T": float(T), "values": data}
