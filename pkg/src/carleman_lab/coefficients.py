"""Degenerate diffusion coefficients and grid certification of the degeneracy bands.

A coefficient a(x) on [0, 1] vanishes at x = 0 and is positive inside the
interval.  The admissible family is certified on a grid through the ratio
x a'(x)/a(x): its supremum K_est sorts the coefficient into the weak band
(K_est < 1), the strong band (K_est in [1, 2)), or rejects it.  Strong-band
coefficients additionally need a lower ratio bound near x = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "Regime",
    "DegeneracyCoefficient",
    "HypothesisReport",
    "MonotoneCheck",
    "make_power_coefficient",
    "make_example_coefficient",
    "make_table_coefficient",
    "coefficient_from_descriptor",
    "classify",
    "monotone_ratio_check",
]

# Grid points within 1e-9 of K_est = 1 are treated as the exact boundary case so
# that floating-point ties at the weak/strong split resolve deterministically.
K_BAND_TOL = 1e-9
# Deterministic near-zero ratio bound reported for the exact boundary case.
BOUNDARY_THETA = 0.99


class Regime(Enum):
    WDC = "WDC"
    SDC = "SDC"
    VIOLATION = "Violation"


@dataclass(frozen=True)
class DegeneracyCoefficient:
    """Diffusion coefficient a(x) with analytic first (and optionally second) derivative.

    ``eval`` is defined on [0, 1]; the derivative evaluators are defined on
    (0, 1] and may blow up at the degenerate endpoint.
    """

    label: str
    eval: Callable[[np.ndarray], np.ndarray]
    eval_deriv: Callable[[np.ndarray], np.ndarray]
    eval_deriv2: Optional[Callable[[np.ndarray], np.ndarray]] = None
    descriptor: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class HypothesisReport:
    """Grid certification summary for a coefficient."""

    K_est: float
    regime: Regime
    theta_hyp: Optional[float]
    neighborhood_radius: float
    grid_size: int
    boundary_case: bool = False


@dataclass(frozen=True)
class MonotoneCheck:
    """Boolean verdict of a monotonicity scan, carrying the first violating abscissa."""

    ok: bool
    violating_x: Optional[float] = None

    def __bool__(self) -> bool:
        return self.ok


def make_power_coefficient(gamma: float) -> DegeneracyCoefficient:
    """Pure power coefficient a(x) = x**gamma with exact derivatives.

    gamma must lie in (0, 2); outside that range the ratio bound K < 2 cannot
    hold and the degenerate problem is not admissible.
    """
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie in (0, 2), got {gamma}")

    def a(x):
        return np.power(x, gamma)

    def da(x):
        return gamma * np.power(x, gamma - 1.0)

    def d2a(x):
        return gamma * (gamma - 1.0) * np.power(x, gamma - 2.0)

    return DegeneracyCoefficient(
        label=f"x^{gamma:g}",
        eval=a,
        eval_deriv=da,
        eval_deriv2=d2a,
        descriptor={"kind": "power", "params": {"gamma": gamma}},
    )


def make_example_coefficient(kind: str, **params) -> DegeneracyCoefficient:
    """Named non-power coefficients with analytic derivatives.

    Kinds and admissible parameters:

    * ``power_cos``: a(x) = x**gamma * cos(beta*x), beta = arctan(alpha),
      alpha >= 0 and gamma in (0, 1) or (1, 2).
    * ``power_minus_x``: a(x) = x**theta - x, theta in (0, 1).
    * ``power_plus_x``: a(x) = x**theta + x, theta in (1, 2).
    """
    if kind == "power_cos":
        gamma = params["gamma"]
        alpha = params.get("alpha", 0.0)
        if not (0.0 < gamma < 1.0 or 1.0 < gamma < 2.0):
            raise ValueError(
                f"power_cos requires gamma in (0,1) or (1,2), got {gamma}"
            )
        if alpha < 0.0:
            raise ValueError(f"power_cos requires alpha >= 0, got {alpha}")
        beta = math.atan(alpha)

        def a(x):
            return np.power(x, gamma) * np.cos(beta * x)

        def da(x):
            return gamma * np.power(x, gamma - 1.0) * np.cos(beta * x) - beta * np.power(
                x, gamma
            ) * np.sin(beta * x)

        def d2a(x):
            return (
                gamma * (gamma - 1.0) * np.power(x, gamma - 2.0) * np.cos(beta * x)
                - 2.0 * gamma * beta * np.power(x, gamma - 1.0) * np.sin(beta * x)
                - beta * beta * np.power(x, gamma) * np.cos(beta * x)
            )

        label = f"x^{gamma:g}*cos({beta:.4g}x)"
        desc = {"kind": "power_cos", "params": {"gamma": gamma, "alpha": alpha}}
        return DegeneracyCoefficient(label, a, da, d2a, desc)

    if kind == "power_minus_x":
        theta = params["theta"]
        if not 0.0 < theta < 1.0:
            raise ValueError(f"power_minus_x requires theta in (0, 1), got {theta}")

        def a(x):
            return np.power(x, theta) - np.asarray(x, dtype=float)

        def da(x):
            return theta * np.power(x, theta - 1.0) - 1.0

        def d2a(x):
            return theta * (theta - 1.0) * np.power(x, theta - 2.0)

        desc = {"kind": "power_minus_x", "params": {"theta": theta}}
        return DegeneracyCoefficient(f"x^{theta:g}-x", a, da, d2a, desc)

    if kind == "power_plus_x":
        theta = params["theta"]
        if not 1.0 < theta < 2.0:
            raise ValueError(f"power_plus_x requires theta in (1, 2), got {theta}")

        def a(x):
            return np.power(x, theta) + np.asarray(x, dtype=float)

        def da(x):
            return theta * np.power(x, theta - 1.0) + 1.0

        def d2a(x):
            return theta * (theta - 1.0) * np.power(x, theta - 2.0)

        desc = {"kind": "power_plus_x", "params": {"theta": theta}}
        return DegeneracyCoefficient(f"x^{theta:g}+x", a, da, d2a, desc)

    raise ValueError(f"unknown coefficient kind {kind!r}")


def make_table_coefficient(x, a, label: str = "table") -> DegeneracyCoefficient:
    """Coefficient from tabulated (x, a) pairs with monotone-cubic interpolation.

    The table must start at (0, 0) and stay positive afterwards; derivatives
    come from the interpolant (second derivative is only piecewise continuous).
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.ndim != 1 or x.shape != a.shape or x.size < 4:
        raise ValueError("table needs matching 1-d arrays with at least 4 points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    if abs(x[0]) > 0 or abs(a[0]) > 1e-14:
        raise ValueError("table must start at x = 0 with a(0) = 0")
    if np.any(a[1:] <= 0):
        raise ValueError("table values must be positive for x > 0")

    interp = PchipInterpolator(x, a, extrapolate=True)
    d1 = interp.derivative(1)
    d2 = interp.derivative(2)
    desc = {"kind": "table", "x": x.tolist(), "a": a.tolist()}
    return DegeneracyCoefficient(label, interp, d1, d2, desc)


def coefficient_from_descriptor(desc: dict) -> DegeneracyCoefficient:
    """Rebuild a coefficient from its JSON descriptor."""
    kind = desc.get("kind")
    if kind == "power":
        return make_power_coefficient(desc["params"]["gamma"])
    if kind in ("power_cos", "power_minus_x", "power_plus_x"):
        return make_example_coefficient(kind, **desc["params"])
    if kind == "table":
        return make_table_coefficient(desc["x"], desc["a"])
    raise ValueError(f"unknown coefficient descriptor kind {kind!r}")


def _ratio_grid(grid_size: int) -> np.ndarray:
    # Log spacing: the ratio x a'/a attains its extremes near the degenerate
    # endpoint for the built-in families; uniform grids miss it.
    return np.logspace(-8.0, 0.0, grid_size)


def classify(
    coef: DegeneracyCoefficient,
    grid_size: int = 2048,
    zero_neighborhood: float = 0.01,
) -> HypothesisReport:
    """Certify the degeneracy band of a coefficient on a log-spaced grid.

    K_est is the grid supremum of x a'(x)/a(x).  The strong band additionally
    records theta_hyp, the grid infimum of the same ratio on
    (0, zero_neighborhood], which must exceed 1 when K_est > 1.  Positivity is
    required at every grid point except x = 1, where a may touch zero.
    """
    if grid_size < 64:
        raise ValueError(f"grid_size must be >= 64, got {grid_size}")
    if not 0.0 < zero_neighborhood <= 0.5:
        raise ValueError(
            f"zero_neighborhood must lie in (0, 0.5], got {zero_neighborhood}"
        )

    def violation() -> HypothesisReport:
        return HypothesisReport(
            K_est=float("nan"),
            regime=Regime.VIOLATION,
            theta_hyp=None,
            neighborhood_radius=zero_neighborhood,
            grid_size=grid_size,
        )

    x = _ratio_grid(grid_size)
    with np.errstate(all="ignore"):
        a = np.asarray(coef.eval(x), dtype=float)
        da = np.asarray(coef.eval_deriv(x), dtype=float)
        a0 = float(np.asarray(coef.eval(np.array([0.0]))).ravel()[0])

    if not math.isfinite(a0) or abs(a0) > 1e-12:
        return violation()
    if not np.all(np.isfinite(a)):
        return violation()
    interior = x < 1.0
    if np.any(a[interior] <= 0.0):
        return violation()
    if a[-1] < 0.0:
        return violation()

    valid = a > 0.0
    with np.errstate(all="ignore"):
        ratio = x[valid] * da[valid] / a[valid]
    if not np.all(np.isfinite(ratio)):
        return violation()

    K_est = float(np.max(ratio))
    near = x[valid] <= zero_neighborhood
    theta_min = float(np.min(ratio[near])) if np.any(near) else float("nan")

    def report(regime, theta, boundary=False):
        return HypothesisReport(
            K_est=K_est,
            regime=regime,
            theta_hyp=theta,
            neighborhood_radius=zero_neighborhood,
            grid_size=grid_size,
            boundary_case=boundary,
        )

    if K_est < -K_BAND_TOL:
        return violation()
    if K_est < 1.0 - K_BAND_TOL:
        return report(Regime.WDC, None)
    if abs(K_est - 1.0) <= K_BAND_TOL:
        # Exact boundary case: any near-zero bound below 1 works; pick 0.99.
        if math.isfinite(theta_min) and theta_min >= BOUNDARY_THETA - K_BAND_TOL:
            return report(Regime.SDC, BOUNDARY_THETA, boundary=True)
        return violation()
    if K_est < 2.0:
        if math.isfinite(theta_min) and 1.0 < theta_min <= K_est + 1e-12:
            return report(Regime.SDC, theta_min)
        return violation()
    return violation()


def monotone_ratio_check(
    coef: DegeneracyCoefficient, r: float, grid_size: int = 1024
) -> MonotoneCheck:
    """Scan whether x -> x**r / a(x) is nondecreasing on (0, 1].

    Also asserts the uniform bound x**2 / a(x) <= 1 / a(1) on the grid.  The
    scan runs in log space to survive the huge dynamic range near x = 0.
    Returns a falsy result carrying the first violating x.
    """
    x = _ratio_grid(grid_size)
    with np.errstate(all="ignore"):
        a = np.asarray(coef.eval(x), dtype=float)
    keep = a > 0.0
    xs, az = x[keep], a[keep]
    g = r * np.log(xs) - np.log(az)
    diffs = np.diff(g)
    tol = 1e-10 * (1.0 + np.max(np.abs(g)))
    bad = np.nonzero(diffs < -tol)[0]
    if bad.size:
        return MonotoneCheck(False, float(xs[bad[0] + 1]))

    a_one = float(np.asarray(coef.eval(np.array([1.0]))).ravel()[0])
    if a_one > 0.0:
        bound = 1.0 / a_one
        q = xs * xs / az
        over = np.nonzero(q > bound * (1.0 + 1e-10))[0]
        if over.size:
            return MonotoneCheck(False, float(xs[over[0]]))
    return MonotoneCheck(True, None)
