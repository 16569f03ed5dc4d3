"""Carleman weight family: sign-changing space profile, time blow-up factor,
and underflow-safe evaluation of the exponential weights.

The space profile psi integrates y/a(y) upward from 0 on the left of the
inner observation window and downward from its left edge beyond the window,
with a polynomial bridge joining the two branches twice-differentiably.  The
time factor blows up at both ends of (0, T), so every weighted integrand
vanishes there to machine precision.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

from .coefficients import DegeneracyCoefficient, coefficient_from_descriptor

__all__ = [
    "PsiFunction",
    "CarlemanWeights",
    "build_psi",
    "build_weights",
    "eval_theta_time",
    "eval_weight",
    "default_omega_prime",
    "weights_config",
    "weights_from_config",
]

# Exponents below this underflow double precision; the weighted integrands are
# zero there to machine accuracy anyway.
UNDERFLOW_EXPONENT = -700.0

_GL_CACHE: dict = {}


def _gauss_nodes(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _segment_integrals(f, lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Gauss-Legendre integral of f over each [lo_i, hi_i] (vectorized)."""
    nodes, wts = _gauss_nodes(n)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return half * (vals @ wts)


def _cumulative_from(f, start: float, xs: np.ndarray, singular_start: bool, n: int):
    """Cumulative integral of f from `start` to each sorted abscissa in xs.

    The leading gap may contain an integrable singularity at `start`; it is
    handled by adaptive quadrature, the remaining gaps by fixed Gauss panels.
    """
    out = np.zeros_like(xs)
    if xs.size == 0:
        return out
    first = 0.0
    if xs[0] > start:
        if singular_start:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    first, _ = integrate.quad(
                        lambda y: float(f(np.array([y]))[0]), start, xs[0], limit=200
                    )
                except (
                    integrate.IntegrationWarning,
                    FloatingPointError,
                    ZeroDivisionError,
                    OverflowError,
                ) as exc:
                    raise ValueError(
                        "integrand not integrable near the degenerate endpoint"
                    ) from exc
            if not np.isfinite(first):
                raise ValueError("integrand not integrable near the degenerate endpoint")
        else:
            first = float(_segment_integrals(f, np.array([start]), xs[:1], n)[0])
    out[0] = first
    if xs.size > 1:
        segs = _segment_integrals(f, xs[:-1], xs[1:], n)
        out[1:] = first + np.cumsum(segs)
    return out


def _hermite_bridge(v0, d0, s0, v1, d1, s1, degree: int = 5) -> np.ndarray:
    """Coefficients (ascending) of the polynomial on [0, 1] matching value,
    first and second derivative at both ends.

    Degree 5 is the minimal deterministic choice; degree 7 additionally
    forces a vanishing third derivative at both ends and serves as the
    alternative joining rule for robustness checks.
    """
    if degree == 5:
        conds = 3
    elif degree == 7:
        conds = 4
    else:
        raise ValueError(f"bridge degree must be 5 or 7, got {degree}")
    n = degree + 1
    A = np.zeros((n, n))
    b = np.zeros(n)
    b[:3] = (v0, d0, s0)
    b[conds : conds + 3] = (v1, d1, s1)
    k = np.arange(n, dtype=float)
    row = np.ones(n)
    for d in range(conds):
        # derivative d at xi = 0 picks the single coefficient d! * c_d
        A[d, d] = math.factorial(d)
        # derivative d at xi = 1 sums the falling factorials
        A[conds + d] = row
        row = row * (k - d)
    return np.linalg.solve(A, b)


class PsiFunction:
    """Sign-changing space profile of the weight family.

    Left of ``alpha_prime`` the profile is the running integral of y/a(y)
    from 0; right of ``beta_prime`` it is the negative running integral from
    ``beta_prime``; a polynomial bridge (quintic by default) joins the
    branches with matching value and two derivatives, so the profile is
    positive near 0, crosses zero at ``beta_prime`` and is negative up to
    x = 1.
    """

    def __init__(
        self,
        coef: DegeneracyCoefficient,
        alpha_prime: float,
        beta_prime: float,
        quad_points: int = 12,
        bridge_degree: int = 5,
    ):
        if not 0.0 < alpha_prime < beta_prime < 1.0:
            raise ValueError(
                f"need 0 < alpha_prime < beta_prime < 1, got ({alpha_prime}, {beta_prime})"
            )
        if quad_points < 4:
            raise ValueError("quad_points must be >= 4")
        self.coef = coef
        self.alpha_prime = float(alpha_prime)
        self.beta_prime = float(beta_prime)
        self.quad_points = int(quad_points)
        self.bridge_degree = int(bridge_degree)
        self._span = self.beta_prime - self.alpha_prime
        self._value_cache: dict = {}

        def integrand(y):
            return y / np.asarray(coef.eval(y), dtype=float)

        self._integrand = integrand

        a_ap = float(np.asarray(coef.eval(np.array([alpha_prime]))).ravel()[0])
        da_ap = float(np.asarray(coef.eval_deriv(np.array([alpha_prime]))).ravel()[0])
        a_bp = float(np.asarray(coef.eval(np.array([beta_prime]))).ravel()[0])
        da_bp = float(np.asarray(coef.eval_deriv(np.array([beta_prime]))).ravel()[0])
        if a_ap <= 0 or a_bp <= 0:
            raise ValueError("coefficient must be positive at the window edges")

        self.psi_alpha = float(
            _cumulative_from(
                integrand, 0.0, np.array([alpha_prime]), True, self.quad_points
            )[0]
        )
        # branch derivatives at the joints
        d1_l = alpha_prime / a_ap
        d2_l = (a_ap - alpha_prime * da_ap) / a_ap**2
        d1_r = -beta_prime / a_bp
        d2_r = -(a_bp - beta_prime * da_bp) / a_bp**2
        L = self._span
        self._bridge = _hermite_bridge(
            self.psi_alpha, L * d1_l, L * L * d2_l, 0.0, L * d1_r, L * L * d2_r,
            degree=self.bridge_degree,
        )
        self._bridge_d1 = P.polyder(self._bridge)
        self._bridge_d2 = P.polyder(self._bridge, 2)
        self._bridge_d3 = P.polyder(self._bridge, 3)

        xi = np.linspace(0.0, 1.0, 2001)
        bridge_vals = P.polyval(xi, self._bridge)
        self.psi_one = float(self.value(np.array([1.0]))[0])
        branch_mag = max(abs(self.psi_alpha), abs(self.psi_one), 1e-300)
        if np.max(np.abs(bridge_vals)) > 10.0 * branch_mag:
            raise ValueError(
                "bridge overshoot: the joining polynomial exceeds 10x the branch "
                "magnitudes (window placement is pathological)"
            )

        # Sup norm by dense sampling plus the branch endpoint values; the left
        # branch is increasing and the right branch decreasing, so their
        # extremes sit at the joints and at x = 1.
        dense = np.linspace(0.0, 1.0, 10001)
        vals = self.value(dense)
        self.psi_sup = float(
            max(np.max(np.abs(vals)), abs(self.psi_alpha), abs(self.psi_one))
        )
        if not (self.psi_alpha > 0.0 and self.psi_one < 0.0):
            raise ValueError("profile lost its sign structure; coefficient inadmissible")

    # -- branch dispatch --------------------------------------------------------
    def _masks(self, x: np.ndarray):
        left = x <= self.alpha_prime
        right = x >= self.beta_prime
        mid = ~(left | right)
        return left, mid, right

    def _xi(self, x: np.ndarray) -> np.ndarray:
        return (x - self.alpha_prime) / self._span

    # -- evaluators --------------------------------------------------------------
    def value(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = x.tobytes()
        cached = self._value_cache.get(key)
        if cached is not None:
            return cached.copy()
        out = np.empty_like(x)
        left, mid, right = self._masks(x)
        if np.any(left):
            xs = x[left]
            order = np.argsort(xs)
            sorted_xs = xs[order]
            vals = _cumulative_from(
                self._integrand, 0.0, sorted_xs, True, self.quad_points
            )
            tmp = np.empty_like(vals)
            tmp[order] = vals
            out[left] = tmp
        if np.any(right):
            xs = x[right]
            order = np.argsort(xs)
            sorted_xs = xs[order]
            vals = _cumulative_from(
                self._integrand, self.beta_prime, sorted_xs, False, self.quad_points
            )
            tmp = np.empty_like(vals)
            tmp[order] = vals
            out[right] = -tmp
        if np.any(mid):
            out[mid] = P.polyval(self._xi(x[mid]), self._bridge)
        if len(self._value_cache) > 64:
            self._value_cache.clear()
        self._value_cache[key] = out.copy()
        return out

    def d1(self, x) -> np.ndarray:
        """First derivative; on the branches this is +-x/a(x) (x > 0)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        left, mid, right = self._masks(x)
        with np.errstate(all="ignore"):
            a = np.asarray(self.coef.eval(x), dtype=float)
            if np.any(left):
                out[left] = x[left] / a[left]
            if np.any(right):
                out[right] = -x[right] / a[right]
        if np.any(mid):
            out[mid] = P.polyval(self._xi(x[mid]), self._bridge_d1) / self._span
        return out

    def d2(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        left, mid, right = self._masks(x)
        with np.errstate(all="ignore"):
            a = np.asarray(self.coef.eval(x), dtype=float)
            da = np.asarray(self.coef.eval_deriv(x), dtype=float)
            if np.any(left):
                out[left] = (a[left] - x[left] * da[left]) / a[left] ** 2
            if np.any(right):
                out[right] = -(a[right] - x[right] * da[right]) / a[right] ** 2
        if np.any(mid):
            out[mid] = P.polyval(self._xi(x[mid]), self._bridge_d2) / self._span**2
        return out

    def d3(self, x) -> np.ndarray:
        if self.coef.eval_deriv2 is None:
            raise ValueError(
                f"coefficient {self.coef.label!r} has no second derivative; "
                "third profile derivative unavailable"
            )
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        left, mid, right = self._masks(x)
        with np.errstate(all="ignore"):
            a = np.asarray(self.coef.eval(x), dtype=float)
            da = np.asarray(self.coef.eval_deriv(x), dtype=float)
            d2a = np.asarray(self.coef.eval_deriv2(x), dtype=float)
            core = (-x * d2a * a - 2.0 * da * (a - x * da)) / a**3
            if np.any(left):
                out[left] = core[left]
            if np.any(right):
                out[right] = -core[right]
        if np.any(mid):
            out[mid] = P.polyval(self._xi(x[mid]), self._bridge_d3) / self._span**3
        return out

    def sign_change_location(self, n: int = 20001) -> float:
        """Abscissa where the profile turns negative (the right window edge,
        up to bridge wiggle)."""
        xs = np.linspace(self.alpha_prime, 1.0, n)
        vals = self.value(xs)
        neg = np.nonzero(vals < 0.0)[0]
        if neg.size == 0:
            return 1.0
        i = neg[0]
        if i == 0:
            return float(xs[0])
        x0, x1 = xs[i - 1], xs[i]
        v0, v1 = vals[i - 1], vals[i]
        return float(x0 - v0 * (x1 - x0) / (v1 - v0))


def build_psi(
    coef: DegeneracyCoefficient,
    alpha_prime: float,
    beta_prime: float,
    quad_points: int = 12,
    bridge_degree: int = 5,
) -> PsiFunction:
    """Construct the sign-changing space profile for a coefficient and window."""
    return PsiFunction(coef, alpha_prime, beta_prime, quad_points, bridge_degree)


def eval_theta_time(t: float, T: float) -> float:
    """Time blow-up factor 1/[t(T-t)]^4 on the open interval (0, T)."""
    t = float(t)
    if t <= 0.0 or t >= T:
        raise ValueError(f"singular endpoint: t must lie in (0, {T}), got {t}")
    g = t * (T - t)
    return g**-4


def default_omega_prime(omega) -> tuple[float, float]:
    """Inner window compactly contained in the control region: trim a quarter
    of the width from each side."""
    a, b = omega
    q = 0.25 * (b - a)
    return (a + q, b - q)


class CarlemanWeights:
    """Weight bundle for fixed profile, lambda and horizon.

    Exposes the time factor, the space factor eta = exp(lam*(sup+psi)), their
    product sigma, the negative exponent phi = theta*(eta - exp(3*lam*sup)),
    and the underflow-safe product exp(2*s*phi)*sigma**k.
    """

    def __init__(self, psi: PsiFunction, lam: float, T: float):
        if lam <= 0.0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if T <= 0.0:
            raise ValueError(f"T must be positive, got {T}")
        self.psi = psi
        self.lam = float(lam)
        self.T = float(T)
        self.coef = psi.coef
        self.psi_sup = psi.psi_sup
        self.c3 = float(np.exp(3.0 * self.lam * self.psi_sup))

    # -- scalar/array component evaluators ----------------------------------------
    def theta_time(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= 0.0) or np.any(t >= self.T):
            raise ValueError("singular endpoint: theta_time needs t in (0, T)")
        g = t * (self.T - t)
        return g**-4

    def eta(self, x) -> np.ndarray:
        return np.exp(self.lam * (self.psi_sup + self.psi.value(x)))

    def sigma(self, t, x) -> np.ndarray:
        return self.theta_time(t) * self.eta(x)

    def phi(self, t, x) -> np.ndarray:
        return self.theta_time(t) * (self.eta(x) - self.c3)

    # time factor derivatives (interior t only)
    def _theta_parts(self, t: np.ndarray):
        g = t * (self.T - t)
        gp = self.T - 2.0 * t
        th = g**-4
        th1 = -4.0 * gp * g**-5
        th2 = 20.0 * gp * gp * g**-6 + 8.0 * g**-5
        return th, th1, th2

    # -- weight grids --------------------------------------------------------------
    def weight_grid(self, ts, xs, s: float, k: float) -> np.ndarray:
        """exp(2*s*phi + k*log(sigma)) on the tensor grid ts x xs.

        Rows with t in {0, T} are exactly zero (the limit of the product), and
        exponents below -700 flush to zero.
        """
        if s <= 0.0:
            raise ValueError(f"s must be positive, got {s}")
        if k < 0.0:
            raise ValueError(f"k must be >= 0, got {k}")
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        interior = (ts > 0.0) & (ts < self.T)
        eta = self.eta(xs)
        em = eta - self.c3
        out = np.zeros((ts.size, xs.size))
        if np.any(interior):
            ti = ts[interior]
            g = ti * (self.T - ti)
            th = g**-4
            expo = 2.0 * s * np.outer(th, em)
            if k > 0.0:
                log_sigma = -4.0 * np.log(g)[:, None] + np.log(eta)[None, :]
                expo = expo + k * log_sigma
            vals = np.where(expo > UNDERFLOW_EXPONENT, np.exp(expo), 0.0)
            out[interior] = vals
        return out

    def weight(self, t, x, s: float, k: float):
        """Pointwise weight; broadcasts a scalar t against an array of x."""
        grid = self.weight_grid(np.atleast_1d(t), np.atleast_1d(x), s, k)
        if np.isscalar(t) and np.isscalar(x):
            return float(grid[0, 0])
        if np.isscalar(t):
            return grid[0]
        if np.isscalar(x):
            return grid[:, 0]
        return grid

    def exp_s_phi_grid(self, ts, xs, s: float) -> np.ndarray:
        """exp(s*phi) on the tensor grid, zero at t in {0, T} and below underflow."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        interior = (ts > 0.0) & (ts < self.T)
        em = self.eta(xs) - self.c3
        out = np.zeros((ts.size, xs.size))
        if np.any(interior):
            ti = ts[interior]
            th = (ti * (self.T - ti)) ** -4
            expo = s * np.outer(th, em)
            out[interior] = np.where(expo > UNDERFLOW_EXPONENT, np.exp(expo), 0.0)
        return out

    # -- branch-safe space composites ----------------------------------------------
    def space_composites(self, xs) -> dict:
        """Pointwise x-factors entering the weighted-operator identities.

        Every entry has a finite limit at x = 0 (taken explicitly):

        * ``eta``  : exp(lam*(sup+psi))
        * ``c1``   : a*psi', equal to +-x on the branches
        * ``c1p``  : (a*psi')'
        * ``c1pp`` : (a*psi')''
        * ``c2``   : a*psi'**2 = x**2/a on the branches
        * ``c3x``  : a*(a*psi'**2)'
        * ``c4``   : a'*(a*psi') = +-x*a'(x)
        * ``c5``   : (a*psi')*(a*psi'**2)'
        * ``a``, ``ap`` : the coefficient and its derivative
        """
        psi = self.psi
        coef = self.coef
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        n = xs.size
        eta = self.eta(xs)
        a = np.asarray(coef.eval(xs), dtype=float)
        pos = xs > 0.0
        left, mid, right = psi._masks(xs)
        c1 = np.zeros(n)
        c1p = np.zeros(n)
        c1pp = np.zeros(n)
        c2 = np.zeros(n)
        c3x = np.zeros(n)
        c4 = np.zeros(n)
        c5 = np.zeros(n)
        ap = np.zeros(n)
        with np.errstate(all="ignore"):
            ap[pos] = np.asarray(coef.eval_deriv(xs[pos]), dtype=float)
            # branches: a*psi' = +-x exactly
            lb = left & pos
            c1[left] = xs[left]  # at x=0 this is 0, the exact limit
            c1p[left] = 1.0
            c1pp[left] = 0.0
            c1[right] = -xs[right]
            c1p[right] = -1.0
            c1pp[right] = 0.0
            branch = (lb | right)
            c2[branch] = xs[branch] ** 2 / a[branch]
            # a*(x^2/a)' = x*(2a - x a')/a = x*(2 - x a'/a)
            c3x[branch] = xs[branch] * (2.0 - xs[branch] * ap[branch] / a[branch])
            c4[lb] = xs[lb] * ap[lb]
            c4[right] = -xs[right] * ap[right]
            # (a psi')(a psi'^2)' = +-(x^2/a)*(2 - x a'/a) on the branches
            c5[lb] = c2[lb] * (2.0 - xs[lb] * ap[lb] / a[lb])
            c5[right] = -c2[right] * (2.0 - xs[right] * ap[right] / a[right])
            if np.any(mid):
                xm = xs[mid]
                am = a[mid]
                apm = ap[mid]
                p1 = psi.d1(xm)
                p2 = psi.d2(xm)
                p3 = psi.d3(xm) if coef.eval_deriv2 is not None else None
                a2m = (
                    np.asarray(coef.eval_deriv2(xm), dtype=float)
                    if coef.eval_deriv2 is not None
                    else None
                )
                c1[mid] = am * p1
                c1p[mid] = apm * p1 + am * p2
                if p3 is not None:
                    c1pp[mid] = a2m * p1 + 2.0 * apm * p2 + am * p3
                else:
                    c1pp[mid] = np.nan
                c2[mid] = am * p1 * p1
                c3x[mid] = am * (apm * p1 * p1 + 2.0 * am * p1 * p2)
                c4[mid] = apm * am * p1
                c5[mid] = (am * p1) * (apm * p1 * p1 + 2.0 * am * p1 * p2)
        # x = 0 limits: the degenerate factor kills every composite
        at0 = ~pos
        for arr in (c1, c2, c3x, c4, c5):
            arr[at0] = 0.0
        c1p[at0] = 1.0
        c1pp[at0] = 0.0
        ap[at0] = np.where(np.isfinite(ap[at0]), ap[at0], 0.0)
        return {
            "eta": eta,
            "a": a,
            "ap": ap,
            "c1": c1,
            "c1p": c1p,
            "c1pp": c1pp,
            "c2": c2,
            "c3x": c3x,
            "c4": c4,
            "c5": c5,
        }


def build_weights(
    coef: DegeneracyCoefficient,
    lam: float,
    T: float,
    alpha_prime: float,
    beta_prime: float,
    quad_points: int = 12,
    bridge_degree: int = 5,
) -> CarlemanWeights:
    """Build the full weight bundle for one coefficient and window."""
    psi = build_psi(coef, alpha_prime, beta_prime, quad_points, bridge_degree)
    return CarlemanWeights(psi, lam, T)


def eval_weight(w: CarlemanWeights, t, x, s: float, k: float):
    """exp(2*s*phi(t,x)) * sigma(t,x)**k, computed in log space; exactly zero
    at t in {0, T} and whenever the exponent drops below -700."""
    return w.weight(t, x, s, k)


def weights_config(w: CarlemanWeights) -> dict:
    """JSON-serializable description of a weight bundle."""
    return {
        "lambda": w.lam,
        "T": w.T,
        "alpha_prime": w.psi.alpha_prime,
        "beta_prime": w.psi.beta_prime,
        "quad_points": w.psi.quad_points,
        "bridge_degree": w.psi.bridge_degree,
        "coefficient": w.coef.descriptor,
    }


def weights_from_config(cfg: dict) -> CarlemanWeights:
    coef = coefficient_from_descriptor(cfg["coefficient"])
    return build_weights(
        coef,
        cfg["lambda"],
        cfg["T"],
        cfg["alpha_prime"],
        cfg["beta_prime"],
        cfg.get("quad_points", 12),
        cfg.get("bridge_degree", 5),
    )
