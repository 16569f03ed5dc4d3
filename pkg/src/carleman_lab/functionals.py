"""Weighted norms, space-time quadrature against the exponential weights, and
Hardy-type ratio evaluation.

Space integrals clip trapezoid cells exactly at region boundaries, so any
partition of [0, 1] reproduces the full integral to rounding.  The integrand
(a/x^2) w^2 of the Hardy ratio is extended by its limit at the degenerate
node when it exists and otherwise loses the first cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .coefficients import DegeneracyCoefficient, HypothesisReport, classify
from .weights import CarlemanWeights

__all__ = [
    "WeightedNorms",
    "Region",
    "HardyCase",
    "HardyReport",
    "weighted_norm",
    "spacetime_weighted_integral",
    "hardy_ratio",
    "aux_hardy_p",
    "aux_hardy_b",
]


class WeightedNorms:
    """Discrete norms built on the degenerate coefficient.

    The first-order norm squares the plain norm plus the face-weighted
    gradient seminorm; the second-order norm adds the flux Laplacian.
    """

    def __init__(self, mesh, coef: DegeneracyCoefficient):
        self.mesh = mesh
        self.coef = coef
        self.a_faces = np.asarray(coef.eval(mesh.faces), dtype=float)
        self.volumes = mesh.volumes
        self.spacings = mesh.spacings

    def l2_sq(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.volumes * u * u))

    def h1a_semi_sq(self, u: np.ndarray) -> float:
        grad = np.diff(np.asarray(u, dtype=float)) / self.spacings
        return float(np.sum(self.a_faces * grad * grad * self.spacings))

    def flux_laplacian(self, u: np.ndarray) -> np.ndarray:
        """Interior values of (a u_x)_x; boundary entries are zero-padded."""
        u = np.asarray(u, dtype=float)
        flux = self.a_faces * np.diff(u) / self.spacings
        out = np.zeros_like(u)
        out[1:-1] = np.diff(flux) / self.volumes[1:-1]
        return out

    def norm(self, kind: str, u: np.ndarray) -> float:
        if kind == "L2":
            return math.sqrt(max(self.l2_sq(u), 0.0))
        if kind == "H1a":
            return math.sqrt(max(self.l2_sq(u) + self.h1a_semi_sq(u), 0.0))
        if kind == "H2a":
            lap = self.flux_laplacian(u)
            return math.sqrt(
                max(self.l2_sq(u) + self.h1a_semi_sq(u) + self.l2_sq(lap), 0.0)
            )
        raise ValueError(f"unknown norm kind {kind!r}")


def weighted_norm(mesh, coef: DegeneracyCoefficient, kind: str, u) -> float:
    """Convenience wrapper over :class:`WeightedNorms`."""
    return WeightedNorms(mesh, coef).norm(kind, u)


class Region(Enum):
    Q = "Q"
    Q_OMEGA = "Q_omega"
    Q_OMEGA_PRIME = "Q_omega_prime"
    LEFT_OF_ALPHA_PRIME = "left_of_alpha_prime"
    RIGHT_OF_BETA_PRIME = "right_of_beta_prime"


def _region_interval(region: Region, weights: CarlemanWeights, omega) -> tuple:
    if region is Region.Q:
        return (0.0, 1.0)
    if region is Region.Q_OMEGA:
        if omega is None:
            raise ValueError("region Q_omega needs the omega interval")
        return tuple(omega)
    ap, bp = weights.psi.alpha_prime, weights.psi.beta_prime
    if region is Region.Q_OMEGA_PRIME:
        return (ap, bp)
    if region is Region.LEFT_OF_ALPHA_PRIME:
        return (0.0, ap)
    if region is Region.RIGHT_OF_BETA_PRIME:
        return (bp, 1.0)
    raise ValueError(f"unknown region {region!r}")


def _clipped_node_quadrature(nodes: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Per-node weights of the trapezoid rule restricted to [lo, hi].

    Each cell integrates its linear interpolant exactly over the clipped
    part, so complementary regions add up to the full-interval rule.
    """
    w = np.zeros(nodes.size)
    x0 = nodes[:-1]
    x1 = nodes[1:]
    h = x1 - x0
    a = np.maximum(x0, lo)
    b = np.minimum(x1, hi)
    keep = b > a
    aa = np.where(keep, a, x0)
    bb = np.where(keep, b, x0)
    # integrals of the two hat pieces over the clipped part of each cell
    left_piece = ((x1 - aa) ** 2 - (x1 - bb) ** 2) / (2.0 * h)
    right_piece = ((bb - x0) ** 2 - (aa - x0) ** 2) / (2.0 * h)
    w[:-1] += left_piece
    w[1:] += right_piece
    return w


def _clipped_cell_lengths(nodes: np.ndarray, lo: float, hi: float) -> np.ndarray:
    a = np.maximum(nodes[:-1], lo)
    b = np.minimum(nodes[1:], hi)
    return np.maximum(b - a, 0.0)


def spacetime_weighted_integral(
    traj,
    weights: CarlemanWeights,
    s: float,
    k: float,
    integrand: str,
    region: Region = Region.Q,
    omega=None,
) -> float:
    """Tensor trapezoid of exp(2*s*phi)*sigma**k times a quadratic field.

    ``integrand`` selects the field: ``v_sq`` and ``source_sq`` square the
    nodal values, ``a_vx_sq`` squares the face gradients against the
    coefficient.  Endpoint rows contribute nothing because the weight
    vanishes at t in {0, T}.
    """
    vals = np.asarray(traj.values, dtype=float)
    mesh = traj.mesh
    nodes = mesh.nodes
    ts = traj.times
    if abs(traj.T - weights.T) > 1e-12 * max(1.0, weights.T):
        raise ValueError("trajectory and weights disagree on the horizon")
    lo, hi = _region_interval(region, weights, omega)
    M = vals.shape[0] - 1
    tw = np.full(M + 1, traj.T / M)
    tw[0] *= 0.5
    tw[-1] *= 0.5

    if integrand in ("v_sq", "source_sq"):
        field = vals * vals
        wgrid = weights.weight_grid(ts, nodes, s, k)
        xw = _clipped_node_quadrature(nodes, lo, hi)
        return float(np.einsum("m,mi,i->", tw, wgrid * field, xw))
    if integrand == "a_vx_sq":
        grads = np.diff(vals, axis=1) / mesh.spacings[None, :]
        a_faces = np.asarray(weights.coef.eval(mesh.faces), dtype=float)
        field = a_faces[None, :] * grads * grads
        wgrid = weights.weight_grid(ts, mesh.faces, s, k)
        lens = _clipped_cell_lengths(nodes, lo, hi)
        return float(np.einsum("m,mi,i->", tw, wgrid * field, lens))
    raise ValueError(f"unknown integrand {integrand!r}")


class HardyCase(Enum):
    CASE_A = "CaseA_theta_lt_1"
    CASE_B = "CaseB_theta_in_1_2"
    AUX_P = "AuxiliaryP"
    AUX_B = "AuxiliaryB"


@dataclass(frozen=True)
class HardyReport:
    lhs: float
    rhs: float
    ratio: float
    case: HardyCase
    violation: bool = False
    theta_used: Optional[float] = None
    monotonicity_ok: Optional[bool] = None


def aux_hardy_p(coef: DegeneracyCoefficient) -> DegeneracyCoefficient:
    """Auxiliary profile (a(x) * x^4)^(1/3) used on the K = 1 path."""

    def p(x):
        x = np.asarray(x, dtype=float)
        return np.cbrt(np.asarray(coef.eval(x), dtype=float) * x**4)

    def dp(x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(coef.eval(x), dtype=float)
        da = np.asarray(coef.eval_deriv(x), dtype=float)
        core = np.cbrt(a * x**4)
        return core * (da / a + 4.0 / x) / 3.0

    return DegeneracyCoefficient(
        label=f"({coef.label}*x^4)^(1/3)", eval=p, eval_deriv=dp,
        descriptor={"kind": "aux_p", "base": coef.descriptor},
    )


def aux_hardy_b(coef: DegeneracyCoefficient) -> DegeneracyCoefficient:
    """Auxiliary profile sqrt(a(x)) * x used on the K = 1 path."""

    def b(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.asarray(coef.eval(x), dtype=float)) * x

    def db(x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(coef.eval(x), dtype=float)
        da = np.asarray(coef.eval_deriv(x), dtype=float)
        sq = np.sqrt(a)
        return sq + x * da / (2.0 * sq)

    return DegeneracyCoefficient(
        label=f"sqrt({coef.label})*x", eval=b, eval_deriv=db,
        descriptor={"kind": "aux_b", "base": coef.descriptor},
    )


def _monotone_on_grid(vals: np.ndarray, nondecreasing: bool) -> bool:
    d = np.diff(vals)
    tol = 1e-9 * (1.0 + float(np.max(np.abs(vals))))
    return bool(np.all(d >= -tol)) if nondecreasing else bool(np.all(d <= tol))


def hardy_ratio(
    coef_or_aux: DegeneracyCoefficient,
    mesh,
    w: np.ndarray,
    case: HardyCase,
    hypothesis: Optional[HypothesisReport] = None,
) -> HardyReport:
    """Ratio of the weighted zero-order integral to the gradient integral.

    Case A requires w(0) = 0 and checks that a/x^theta is nonincreasing for a
    theta just above the certified band; case B and the auxiliary cases
    require w(1) = 0 and check nondecrease near zero.
    """
    w = np.asarray(w, dtype=float)
    nodes = mesh.nodes
    if w.shape != nodes.shape:
        raise ValueError("nodal values must match the mesh")
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if case is HardyCase.CASE_A:
        if abs(w[0]) > 1e-12 * (1.0 + scale):
            raise ValueError("case A needs w(0) = 0")
    else:
        if abs(w[-1]) > 1e-12 * (1.0 + scale):
            raise ValueError(f"case {case.value} needs w(1) = 0")

    a_nodes = np.asarray(coef_or_aux.eval(nodes), dtype=float)
    a_faces = np.asarray(coef_or_aux.eval(mesh.faces), dtype=float)
    vols = mesh.volumes
    with np.errstate(all="ignore"):
        f = a_nodes / nodes**2 * w * w
    # degenerate node: limit when the boundary constraint kills it, else drop
    # the first cell and integrate from the first interior node
    if case is HardyCase.CASE_A:
        f[0] = 0.0
        lhs = float(np.sum(vols * f))
    else:
        lhs = float(np.sum(vols[1:] * f[1:]))
    grad = np.diff(w) / mesh.spacings
    rhs = float(np.sum(a_faces * grad * grad * mesh.spacings))

    violation = False
    if rhs <= 0.0:
        if lhs > 1e-14 * (1.0 + scale) ** 2:
            violation = True
            ratio = float("inf")
        else:
            ratio = 0.0
    else:
        ratio = lhs / rhs

    theta_used = None
    mono_ok = None
    probe = np.logspace(-6, 0, 257)
    with np.errstate(all="ignore"):
        avals = np.asarray(coef_or_aux.eval(probe), dtype=float)
    if case is HardyCase.CASE_A:
        if hypothesis is None:
            hypothesis = classify(coef_or_aux, grid_size=512)
        k_est = hypothesis.K_est if math.isfinite(hypothesis.K_est) else 1.0
        theta_used = min(k_est + 0.01, 0.999)
        mono_ok = _monotone_on_grid(avals / probe**theta_used, nondecreasing=False)
    elif case is HardyCase.CASE_B:
        if hypothesis is not None and hypothesis.theta_hyp is not None:
            theta_used = hypothesis.theta_hyp
            near = probe <= 0.1
            mono_ok = _monotone_on_grid(
                (avals / probe**theta_used)[near], nondecreasing=True
            )
    elif case is HardyCase.AUX_P:
        # exponent (4 + theta)/3 lies in (1, 2) for theta in (0, 1)
        theta = hypothesis.theta_hyp if hypothesis and hypothesis.theta_hyp else 0.99
        theta_used = (4.0 + theta) / 3.0
        near = probe <= 0.1
        mono_ok = _monotone_on_grid(
            (avals / probe**theta_used)[near], nondecreasing=True
        )
    elif case is HardyCase.AUX_B:
        # exponent theta/2 + 1 lies in (1, 3/2) for theta in (0, 1)
        theta = hypothesis.theta_hyp if hypothesis and hypothesis.theta_hyp else 0.99
        theta_used = theta / 2.0 + 1.0
        near = probe <= 0.1
        mono_ok = _monotone_on_grid(
            (avals / probe**theta_used)[near], nondecreasing=True
        )

    return HardyReport(
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        case=case,
        violation=violation,
        theta_used=theta_used,
        monotonicity_ok=mono_ok,
    )
