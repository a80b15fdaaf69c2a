"""Closed-form scalar proximal operators for support-penalized objectives.

All operators here minimize one-dimensional (or, for the switching variant,
two-dimensional) model problems of the form

    q*u + u^2/2 + s*|u|_0         over |u| <= b,

where |u|_0 is 0 at u = 0 and 1 otherwise.  Because the penalty is
discontinuous at the origin, the solution maps are set-valued at tie points;
the sets always have one or two elements and contain 0 whenever they are
multi-valued.  The canonical (measurable) selection takes 0 at ties.

Ties on the defining equalities are detected with an absolute tolerance of
1e-12 so that double-precision inputs that are ties "in intent" (e.g. a
threshold computed as sqrt(2*beta/(L+alpha))) produce the two-element set
deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TIE_TOL = 1e-12

__all__ = [
    "TIE_TOL",
    "ScalarSolutionSet",
    "ProxParams",
    "SwitchingPoint",
    "hard_threshold",
    "box_hard_threshold",
    "prox_l0",
    "prox_l1",
    "prox_switch",
    "separation_threshold",
    "fp_membership",
    "convex_envelope_value",
    "convexified_not_fixed_point_check",
    "prox_l0_array",
    "prox_l0_set_arrays",
    "prox_l1_array",
    "prox_switch_arrays",
]


def _require_finite(name, x):
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")


@dataclass(frozen=True)
class ScalarSolutionSet:
    """Solution set of a scalar thresholding problem: 1 or 2 values.

    When two values are present one of them is 0 and `canonical` is 0;
    otherwise `canonical` is the unique value.
    """

    values: tuple
    canonical: float = field(init=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) not in (1, 2):
            raise ValueError("solution set must have 1 or 2 values")
        if len(vals) == 2 and 0.0 not in vals:
            raise ValueError("a two-element solution set must contain 0")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "canonical", 0.0 if len(vals) == 2 else vals[0])

    def distance(self, x):
        """Distance from x to the set."""
        return min(abs(x - v) for v in self.values)

    def contains(self, x, tol=1e-10):
        return self.distance(x) <= tol


@dataclass(frozen=True)
class ProxParams:
    """Weights of the pointwise prox subproblem.

    L:     prox weight (>= 0)
    alpha: quadratic control-cost weight (>= 0); L + alpha > 0 required
           whenever the operator is applied
    beta:  support-penalty weight (> 0)
    bound: box bound in (0, +inf]; +inf selects the unconstrained case
    """

    L: float
    alpha: float
    beta: float
    bound: float = math.inf

    def __post_init__(self):
        if self.L < 0 or not math.isfinite(self.L):
            raise ValueError(f"L must be a finite nonnegative real, got {self.L}")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be a finite nonnegative real, got {self.alpha}")
        if not (self.beta > 0) or not math.isfinite(self.beta):
            raise ValueError(f"beta must be a finite positive real, got {self.beta}")
        if not (self.bound > 0):
            raise ValueError(f"bound must be positive (or +inf), got {self.bound}")

    def _weight(self):
        w = self.L + self.alpha
        if w <= 0:
            raise ValueError("L + alpha must be positive")
        return w


@dataclass(frozen=True)
class SwitchingPoint:
    """A pair of control values attached to one point of the 1-D grid."""

    u1: float
    u2: float

    def __post_init__(self):
        _require_finite("u1", self.u1)
        _require_finite("u2", self.u2)


def hard_threshold(q, t):
    """Solution set of  min_u  -q*u + u^2/2 + (t^2/2)*|u|_0  over the reals.

    Keeps q when |q| > t, returns {0, q} at |q| = t (within TIE_TOL), and
    {0} when |q| < t.
    """
    _require_finite("q", q)
    if not (t > 0) or not math.isfinite(t):
        raise ValueError(f"threshold t must be a finite positive real, got {t}")
    gap = abs(q) - t
    if gap > TIE_TOL:
        return ScalarSolutionSet((q,))
    if gap >= -TIE_TOL:
        return ScalarSolutionSet((0.0, q))
    return ScalarSolutionSet((0.0,))


def box_hard_threshold(q, s, b):
    """All global minimizers of  -q*u + u^2/2 + s*|u|_0  over |u| <= b.

    The set is {clip(q)} well inside the active region, {0} well inside the
    dead zone, and the two-element tie set on the (tolerance-widened)
    boundary between them.  b may be +inf, in which case the map reduces to
    hard_threshold(q, sqrt(2s)).

    As a set-valued map of q this is monotone with closed graph but not
    maximal: filling each jump at a tie point with the whole segment between
    its two values yields the (unique) maximal monotone extension.  Only the
    minimizer set is constructed here; the extension exists solely at the
    two tie arguments and has no computational role.
    """
    _require_finite("q", q)
    if s < 0 or not math.isfinite(s):
        raise ValueError(f"s must be a finite nonnegative real, got {s}")
    if not (b > 0):
        raise ValueError(f"b must be positive (or +inf), got {b}")

    root = math.sqrt(2.0 * s)
    if math.isinf(b):
        if s == 0.0:
            return ScalarSolutionSet((q,))
        return hard_threshold(q, root)

    # Thresholds of the case analysis: the nonzero candidate is q clipped to
    # the box; zero competes against it up to |q| = root when root <= b and
    # up to |q| = b/2 + s/b otherwise.
    zero_threshold = root if root <= b else 0.5 * b + s / b
    v = min(max(q, -b), b)

    sols = []
    if abs(q) >= zero_threshold - TIE_TOL and v != 0.0:
        sols.append(v)
    if abs(q) <= zero_threshold + TIE_TOL or v == 0.0:
        sols.append(0.0)
    return ScalarSolutionSet(tuple(sols))


def separation_threshold(p: ProxParams):
    """Smallest magnitude a nonzero prox output can take: min(b, sqrt(2*beta/(L+alpha)))."""
    w = p._weight()
    return min(p.bound, math.sqrt(2.0 * p.beta / w))


def prox_l0(g_k, u_k, p: ProxParams):
    """Global minimizers of  g_k*u + (L/2)(u-u_k)^2 + (alpha/2)u^2 + beta*|u|_0  over |u| <= b.

    Reduces to box_hard_threshold at the gradient-shifted argument
    (L*u_k - g_k)/(L+alpha) with s = beta/(L+alpha).  Every nonzero output
    has magnitude at least separation_threshold(p).
    """
    _require_finite("g_k", g_k)
    _require_finite("u_k", u_k)
    w = p._weight()
    q = (p.L * u_k - g_k) / w
    return box_hard_threshold(q, p.beta / w, p.bound)


def prox_l1(g_k, u_k, L, alpha, gamma, b=math.inf):
    """Unique minimizer of  g_k*u + (L/2)(u-u_k)^2 + (alpha/2)u^2 + gamma*|u|  over |u| <= b.

    Soft thresholding of L*u_k - g_k at level gamma, scaled by 1/(L+alpha)
    and clipped to the box.
    """
    _require_finite("g_k", g_k)
    _require_finite("u_k", u_k)
    if gamma < 0 or not math.isfinite(gamma):
        raise ValueError(f"gamma must be a finite nonnegative real, got {gamma}")
    if not (b > 0):
        raise ValueError(f"b must be positive (or +inf), got {b}")
    w = L + alpha
    if w <= 0:
        raise ValueError("L + alpha must be positive")
    z = L * u_k - g_k
    u = math.copysign(max(abs(z) - gamma, 0.0), z) / w
    return min(max(u, -b), b)


def _switch_quadratic(u1, u2, g: SwitchingPoint, u_k: SwitchingPoint, L, alpha):
    return (
        g.u1 * u1
        + g.u2 * u2
        + 0.5 * L * ((u1 - u_k.u1) ** 2 + (u2 - u_k.u2) ** 2)
        + 0.5 * alpha * (u1 * u1 + u2 * u2)
    )


def prox_switch(g: SwitchingPoint, u_k: SwitchingPoint, L, alpha, beta):
    """Global minimizer of  g.u + (L/2)|u-u_k|^2 + (alpha/2)|u|^2 + beta*|u1*u2|_0  over R^2.

    Enumerates the unconstrained quadratic vertex and its two one-sided
    restrictions (u1 = 0 and u2 = 0) and keeps the cheapest; objective ties
    within 1e-12 prefer a zero-product candidate, then u1 = 0 over u2 = 0.
    """
    if not (beta > 0) or not math.isfinite(beta):
        raise ValueError(f"beta must be a finite positive real, got {beta}")
    w = L + alpha
    if w <= 0:
        raise ValueError("L + alpha must be positive")
    m1 = (L * u_k.u1 - g.u1) / w
    m2 = (L * u_k.u2 - g.u2) / w

    obj_full = _switch_quadratic(m1, m2, g, u_k, L, alpha) + (beta if m1 != 0.0 and m2 != 0.0 else 0.0)
    obj_first_off = _switch_quadratic(0.0, m2, g, u_k, L, alpha)
    obj_second_off = _switch_quadratic(m1, 0.0, g, u_k, L, alpha)

    best = min(obj_full, obj_first_off, obj_second_off)
    if obj_first_off <= best + TIE_TOL:
        return SwitchingPoint(0.0, m2)
    if obj_second_off <= best + TIE_TOL:
        return SwitchingPoint(m1, 0.0)
    return SwitchingPoint(m1, m2)


def fp_membership(u, g, p: ProxParams):
    """Whether u reproduces itself under the thresholding step at gradient g.

    True iff u belongs to prox_l0(g, u, p), written out as the explicit case
    analysis on (u, g) with s = beta/(L+alpha):  the branch with
    sqrt(2s) <= b uses the plain threshold sqrt(2s) for the dead zone and
    alpha*b for the bound-active conditions, the branch with sqrt(2s) > b
    replaces them by b/2 + s/b expressions.  Exact ties are included
    (tolerance TIE_TOL on every defining equality and interval endpoint).
    """
    _require_finite("u", u)
    _require_finite("g", g)
    w = p._weight()
    s = p.beta / w
    root = math.sqrt(2.0 * s)
    b = p.bound

    if math.isinf(b) or root <= b:
        zero_bound = w * root
        if not math.isinf(b):
            if abs(u + b) <= TIE_TOL and g >= p.alpha * b - TIE_TOL:
                return True
            if abs(u - b) <= TIE_TOL and g <= -p.alpha * b + TIE_TOL:
                return True
    else:
        edge = w * (0.5 * b + s / b)
        zero_bound = edge
        if abs(u + b) <= TIE_TOL and g >= edge - p.L * b - TIE_TOL:
            return True
        if abs(u - b) <= TIE_TOL and g <= -(edge - p.L * b) + TIE_TOL:
            return True

    if abs(u) <= TIE_TOL and abs(g) <= zero_bound + TIE_TOL:
        return True

    # interior stationary values: alpha*u = -g with |u| in [sqrt(2s), b]
    if p.alpha > 0:
        if abs(p.alpha * u + g) <= TIE_TOL and root - TIE_TOL <= abs(u) <= b + TIE_TOL:
            return True
    else:
        if abs(g) <= TIE_TOL and root - TIE_TOL <= abs(u) <= b + TIE_TOL:
            return True
    return False


def convex_envelope_value(u, alpha, beta):
    """Convex envelope of  (alpha/2)u^2 + beta*|u|_0  at u.

    Linear with slope sqrt(2*alpha*beta) inside |u| <= sqrt(2*beta/alpha),
    and beta + (alpha/2)u^2 outside; the two branches meet continuously.
    """
    _require_finite("u", u)
    if not (alpha > 0) or not math.isfinite(alpha):
        raise ValueError(f"alpha must be a finite positive real, got {alpha}")
    if not (beta > 0) or not math.isfinite(beta):
        raise ValueError(f"beta must be a finite positive real, got {beta}")
    cutoff = math.sqrt(2.0 * beta / alpha)
    if abs(u) >= cutoff:
        return beta + 0.5 * alpha * u * u
    return math.sqrt(2.0 * alpha * beta) * abs(u)


def convexified_not_fixed_point_check(g, alpha, beta, b, L, u_bar=None):
    """Check that an interior envelope minimizer escapes under the thresholding step.

    Requires |g| = sqrt(2*alpha*beta) (within TIE_TOL), the configuration in
    which the envelope g*u + conv_env(u) is minimized on a whole segment.
    u_bar defaults to the segment midpoint sign(-g)*min(b, sqrt(2*beta/alpha))/2.
    Returns True iff u_bar is not reproduced by prox_l0(g, u_bar, .) and the
    canonical step from u_bar strictly decreases g*u + (alpha/2)u^2 + beta*|u|_0.
    """
    if not (L > 0) or not math.isfinite(L):
        raise ValueError(f"L must be a finite positive real, got {L}")
    if not (alpha > 0):
        raise ValueError("alpha must be positive")
    if abs(abs(g) - math.sqrt(2.0 * alpha * beta)) > TIE_TOL:
        raise ValueError("|g| must equal sqrt(2*alpha*beta) for the envelope to be flat")
    cutoff = math.sqrt(2.0 * beta / alpha)
    if u_bar is None:
        u_bar = 0.5 * math.copysign(min(b, cutoff), -g)
    if not (0 < abs(u_bar) < cutoff) or abs(u_bar) > b:
        raise ValueError("u_bar must lie strictly inside the flat segment of the envelope")
    if g * u_bar > 0:
        raise ValueError("u_bar must lie on the descent side of the envelope")

    params = ProxParams(L=L, alpha=alpha, beta=beta, bound=b)
    sol = prox_l0(g, u_bar, params)

    def pointwise(u):
        return g * u + 0.5 * alpha * u * u + (beta if u != 0.0 else 0.0)

    escaped = not sol.contains(u_bar, tol=TIE_TOL)
    decreased = pointwise(sol.canonical) < pointwise(u_bar)
    return escaped and decreased


# ---------------------------------------------------------------------------
# vectorized variants used by the solver on whole control fields
# ---------------------------------------------------------------------------


def _l0_thresholds(L, alpha, beta, bound):
    w = L + alpha
    if w <= 0:
        raise ValueError("L + alpha must be positive")
    s = beta / w
    root = math.sqrt(2.0 * s)
    if math.isinf(bound) or root <= bound:
        return w, root
    return w, 0.5 * bound + s / bound


def prox_l0_set_arrays(g, u, L, alpha, beta, bound):
    """Vectorized solution-set description of prox_l0 over arrays.

    Returns (zero_ok, v, v_ok): 0 belongs to the set where zero_ok, and the
    nonzero candidate v (the clipped shifted argument) belongs where v_ok.
    """
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    w, zero_threshold = _l0_thresholds(L, alpha, beta, bound)
    q = (L * u - g) / w
    aq = np.abs(q)
    v = q if math.isinf(bound) else np.clip(q, -bound, bound)
    zero_ok = aq <= zero_threshold + TIE_TOL
    v_ok = (aq >= zero_threshold - TIE_TOL) & (v != 0.0)
    return zero_ok, v, v_ok


def prox_l0_array(g, u, L, alpha, beta, bound):
    """Canonical (tie -> 0) selection of prox_l0, vectorized over cells."""
    zero_ok, v, _ = prox_l0_set_arrays(g, u, L, alpha, beta, bound)
    return np.where(zero_ok, 0.0, v)


def prox_l1_array(g, u, L, alpha, gamma, bound):
    """Soft-thresholding prox, vectorized over cells."""
    w = L + alpha
    if w <= 0:
        raise ValueError("L + alpha must be positive")
    z = L * np.asarray(u, dtype=float) - np.asarray(g, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0) / w
    if not math.isinf(bound):
        np.clip(out, -bound, bound, out=out)
    return out


def prox_switch_arrays(g1, g2, u1, u2, L, alpha, beta):
    """Vectorized prox_switch over paired 1-D control arrays."""
    w = L + alpha
    if w <= 0:
        raise ValueError("L + alpha must be positive")
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    m1 = (L * u1 - g1) / w
    m2 = (L * u2 - g2) / w

    def quad(a1, a2):
        return (
            g1 * a1
            + g2 * a2
            + 0.5 * L * ((a1 - u1) ** 2 + (a2 - u2) ** 2)
            + 0.5 * alpha * (a1 * a1 + a2 * a2)
        )

    obj_full = quad(m1, m2) + np.where((m1 != 0.0) & (m2 != 0.0), beta, 0.0)
    obj_first_off = quad(np.zeros_like(m1), m2)
    obj_second_off = quad(m1, np.zeros_like(m2))

    best = np.minimum(obj_full, np.minimum(obj_first_off, obj_second_off))
    take_first_off = obj_first_off <= best + TIE_TOL
    take_second_off = ~take_first_off & (obj_second_off <= best + TIE_TOL)

    out1 = np.where(take_first_off, 0.0, m1)
    out2 = np.where(take_second_off, 0.0, m2)
    return out1, out2
