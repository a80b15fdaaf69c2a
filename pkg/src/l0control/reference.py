"""Brute-force reference minimizers for the scalar subproblems.

These routines are the ground truth the closed-form operators are validated
against: dense grid search (default step 1e-4) plus exact evaluation at the
analytic candidate points {0, -b, b, quadratic vertices}.  They are written
from the objective functions alone and deliberately share no helpers with
the closed-form module.

Each scalar reference returns (min_value, argmins) where argmins are the
candidate points whose objective lies within CANDIDATE_TOL of the observed
minimum.  If a grid point beats every candidate by more than CANDIDATE_TOL
the argmin list comes back empty, which callers should treat as a failure.
"""

from __future__ import annotations

import math

import numpy as np

GRID_STEP = 1e-4
CANDIDATE_TOL = 1e-9


def _grid(lo, hi, step):
    n = max(int(math.ceil((hi - lo) / step)) + 1, 2)
    return np.linspace(lo, hi, n)


def _refine(objective, grid, candidates):
    vals = objective(grid)
    best = float(np.min(vals))
    cands = sorted(set(float(c) for c in candidates))
    cand_vals = [float(objective(np.array([c]))[0]) for c in cands]
    best = min(best, min(cand_vals))
    argmins = tuple(c for c, v in zip(cands, cand_vals) if v <= best + CANDIDATE_TOL)
    return best, argmins


def box_threshold_reference(q, s, b, step=GRID_STEP):
    """min of  -q*u + u^2/2 + s*(u != 0)  over |u| <= b."""

    def objective(u):
        return -q * u + 0.5 * u * u + s * (u != 0.0)

    if math.isinf(b):
        radius = abs(q) + math.sqrt(2.0 * s) + 0.5
        grid = _grid(-radius, radius, step)
        candidates = [0.0, q]
    else:
        grid = _grid(-b, b, step)
        candidates = [0.0, -b, b, min(max(q, -b), b)]
    return _refine(objective, grid, candidates)


def prox_l0_reference(g, u_k, L, alpha, beta, b, step=GRID_STEP):
    """min of  g*u + (L/2)(u-u_k)^2 + (alpha/2)u^2 + beta*(u != 0)  over |u| <= b."""

    def objective(u):
        return g * u + 0.5 * L * (u - u_k) ** 2 + 0.5 * alpha * u * u + beta * (u != 0.0)

    vertex = (L * u_k - g) / (L + alpha)
    if math.isinf(b):
        radius = abs(vertex) + math.sqrt(2.0 * beta / (L + alpha)) + 0.5
        grid = _grid(-radius, radius, step)
        candidates = [0.0, vertex]
    else:
        grid = _grid(-b, b, step)
        candidates = [0.0, -b, b, min(max(vertex, -b), b)]
    return _refine(objective, grid, candidates)


def prox_l1_reference(g, u_k, L, alpha, gamma, b, step=GRID_STEP):
    """min of  g*u + (L/2)(u-u_k)^2 + (alpha/2)u^2 + gamma*|u|  over |u| <= b."""

    def objective(u):
        return g * u + 0.5 * L * (u - u_k) ** 2 + 0.5 * alpha * u * u + gamma * np.abs(u)

    # vertices of the two smooth half-line pieces, each valid on its side only
    vpos = max((L * u_k - g - gamma) / (L + alpha), 0.0)
    vneg = min((L * u_k - g + gamma) / (L + alpha), 0.0)
    if math.isinf(b):
        radius = max(abs(vpos), abs(vneg)) + 0.5
        grid = _grid(-radius, radius, step)
        candidates = [0.0, vpos, vneg]
    else:
        grid = _grid(-b, b, step)
        candidates = [0.0, -b, b, min(vpos, b), max(vneg, -b)]
    return _refine(objective, grid, candidates)


def prox_switch_reference(g1, g2, uk1, uk2, L, alpha, beta, radius=3.0, step=1e-3):
    """min of  g.u + (L/2)|u-u_k|^2 + (alpha/2)|u|^2 + beta*(u1*u2 != 0)  over R^2.

    The quadratic part separates into the coordinates, so the search runs one
    dense grid per axis and combines the pieces: both coordinates active
    (penalty beta), first off, second off.  Candidate pairs are built from
    the per-axis vertices.
    """

    def q1(u):
        return g1 * u + 0.5 * L * (u - uk1) ** 2 + 0.5 * alpha * u * u

    def q2(u):
        return g2 * u + 0.5 * L * (u - uk2) ** 2 + 0.5 * alpha * u * u

    m1 = (L * uk1 - g1) / (L + alpha)
    m2 = (L * uk2 - g2) / (L + alpha)
    r = max(radius, abs(m1) + 0.5, abs(m2) + 0.5)
    grid1 = np.append(_grid(-r, r, step), m1)
    grid2 = np.append(_grid(-r, r, step), m2)

    v1 = q1(grid1)
    v2 = q2(grid2)
    zero1 = float(q1(np.array([0.0]))[0])
    zero2 = float(q2(np.array([0.0]))[0])
    min1_free = min(float(np.min(v1)), zero1)
    min2_free = min(float(np.min(v2)), zero2)
    min1_nz = float(np.min(v1[grid1 != 0.0]))
    min2_nz = float(np.min(v2[grid2 != 0.0]))

    best = min(
        min1_nz + min2_nz + beta,  # both coordinates active
        zero1 + min2_free,         # first coordinate off
        min1_free + zero2,         # second coordinate off
    )

    def total(u1, u2):
        pen = beta if (u1 != 0.0 and u2 != 0.0) else 0.0
        return float(q1(np.array([u1]))[0] + q2(np.array([u2]))[0]) + pen

    pairs = {(m1, m2), (0.0, m2), (m1, 0.0), (0.0, 0.0)}
    argmins = tuple(p for p in sorted(pairs) if total(*p) <= best + CANDIDATE_TOL)
    return best, argmins


# ---------------------------------------------------------------------------
# batched references for the large randomized suites
# ---------------------------------------------------------------------------


def _rowwise_grid_min(c2, c1, cabs, n_points, chunk=64):
    """Row-wise min of  c2*t^2 + c1*t + cabs*|t|  over t in [-1, 1] \\ {0}.

    n_points is forced even so the grid never contains t = 0 and constant
    support penalties can be added by the caller.
    """
    if n_points % 2:
        n_points += 1
    t = np.linspace(-1.0, 1.0, n_points)
    t2 = t * t
    at = np.abs(t)
    c2 = np.asarray(c2, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    cabs = np.asarray(cabs, dtype=float)
    out = np.empty(c2.shape[0])
    buf = np.empty((chunk, n_points))
    tmp = np.empty((chunk, n_points))
    use_abs = bool(np.any(cabs != 0.0))
    for start in range(0, c2.shape[0], chunk):
        stop = min(start + chunk, c2.shape[0])
        m = stop - start
        np.multiply(c2[start:stop, None], t2[None, :], out=buf[:m])
        np.multiply(c1[start:stop, None], t[None, :], out=tmp[:m])
        buf[:m] += tmp[:m]
        if use_abs:
            np.multiply(cabs[start:stop, None], at[None, :], out=tmp[:m])
            buf[:m] += tmp[:m]
        out[start:stop] = buf[:m].min(axis=1)
    return out


def penalized_quadratic_batch(a2, a1, abs_weight, support_weight, radius, step=GRID_STEP):
    """Row-wise reference for  a2*u^2 + a1*u + w_abs*|u| + w_supp*(u != 0)  over |u| <= radius.

    Returns (min_values, candidates, candidate_values): candidates has one
    column per analytic candidate {0, -radius, radius, positive-side vertex,
    negative-side vertex}; candidate_values are their exact objectives.  The
    reported minimum also covers the dense grid so that a wrong candidate
    enumeration cannot go unnoticed.
    """
    a2 = np.asarray(a2, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    wa = np.broadcast_to(np.asarray(abs_weight, dtype=float), a2.shape)
    ws = np.broadcast_to(np.asarray(support_weight, dtype=float), a2.shape)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), a2.shape)

    n_points = int(math.ceil(2.0 * float(radius.max()) / step)) + 2
    grid_min = _rowwise_grid_min(a2 * radius**2, a1 * radius, wa * radius, n_points)
    grid_min = grid_min + ws

    vpos = np.clip(-(a1 + wa) / (2.0 * a2), 0.0, radius)
    vneg = np.clip(-(a1 - wa) / (2.0 * a2), -radius, 0.0)
    candidates = np.stack(
        [np.zeros_like(a2), -radius, radius, vpos, vneg], axis=1
    )
    cvals = (
        a2[:, None] * candidates**2
        + a1[:, None] * candidates
        + wa[:, None] * np.abs(candidates)
        + ws[:, None] * (candidates != 0.0)
    )
    min_values = np.minimum(grid_min, cvals.min(axis=1))
    return min_values, candidates, cvals


def switch_batch(g1, g2, uk1, uk2, L, alpha, beta, radius=3.0, step=1e-3):
    """Row-wise reference minimum for the paired switching subproblem.

    Same objective as prox_switch_reference; exploits the separable quadratic
    part (one dense grid per axis) and returns (min_values, candidates,
    candidate_values) with candidates of shape (N, 4, 2) covering
    {(m1, m2), (0, m2), (m1, 0), (0, 0)}.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    uk1 = np.asarray(uk1, dtype=float)
    uk2 = np.asarray(uk2, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), g1.shape)
    w = L + alpha
    a2 = 0.5 * w * np.ones_like(g1)
    b1 = g1 - L * uk1
    b2 = g2 - L * uk2
    const = 0.5 * L * (uk1**2 + uk2**2) * np.ones_like(g1)

    m1 = -b1 / w
    m2 = -b2 / w
    r = max(radius, float(np.max(np.abs(m1))) + 0.5, float(np.max(np.abs(m2))) + 0.5)
    rad = np.full_like(g1, r)
    n_points = int(math.ceil(2.0 * r / step)) + 2

    zeros = np.zeros_like(g1)
    nz1 = _rowwise_grid_min(a2 * rad**2, b1 * rad, zeros, n_points)
    nz2 = _rowwise_grid_min(a2 * rad**2, b2 * rad, zeros, n_points)
    vx1 = a2 * m1**2 + b1 * m1
    vx2 = a2 * m2**2 + b2 * m2
    nz1 = np.minimum(nz1, np.where(m1 != 0.0, vx1, np.inf))
    nz2 = np.minimum(nz2, np.where(m2 != 0.0, vx2, np.inf))
    free1 = np.minimum(np.minimum(nz1, 0.0), vx1)
    free2 = np.minimum(np.minimum(nz2, 0.0), vx2)

    best = np.minimum(nz1 + nz2 + beta, np.minimum(free2, free1))
    best = best + const

    candidates = np.stack(
        [
            np.stack([m1, m2], axis=1),
            np.stack([np.zeros_like(m1), m2], axis=1),
            np.stack([m1, np.zeros_like(m2)], axis=1),
            np.zeros((g1.shape[0], 2)),
        ],
        axis=1,
    )
    c1 = candidates[:, :, 0]
    c2 = candidates[:, :, 1]
    cvals = (
        a2[:, None] * (c1**2 + c2**2)
        + b1[:, None] * c1
        + b2[:, None] * c2
        + const[:, None]
        + beta[:, None] * ((c1 != 0.0) & (c2 != 0.0))
    )
    min_values = np.minimum(best, cvals.min(axis=1))
    return min_values, candidates, cvals
