"""Thresholding iteration with fixed or adaptive prox weights.

Each iteration linearizes the tracking term at the current control and solves
the resulting pointwise subproblem exactly through the closed-form prox maps.
With an adaptive weight, a trial weight L is accepted when the decrease
condition

    eta * ||u_next - u_k||^2  <=  F(u_k) - F(u_next),        F = f + g,

holds.  Rejection multiplies L by 1/theta (a smaller step), widening
multiplies an accepted initial weight by theta while the condition keeps
holding.  Every trial costs one PDE solve (the f evaluation at the trial
point) on top of the two solves per iteration for the gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from . import problem as problemmod
from . import prox as proxmod

log = logging.getLogger(__name__)

FIXED = "fixed"
BT = "bt"
BT_W = "btw"
BT_0 = "bt0"

STRATEGY_KINDS = (FIXED, BT, BT_W, BT_0)

TOLERANCE = "tolerance"
MAX_ITERATIONS = "max_iterations"

# a descent failure surviving this many weight increases signals an
# inconsistent gradient, since the condition holds for every L > L_f
MAX_INCREASES = 200

__all__ = [
    "FIXED",
    "BT",
    "BT_W",
    "BT_0",
    "TOLERANCE",
    "MAX_ITERATIONS",
    "StepStrategy",
    "SolverOptions",
    "IterationRecord",
    "SolveReport",
    "StepSearchError",
    "descent_ok",
    "iht_step",
    "select_step",
    "fp_residual",
    "run",
]


class StepSearchError(RuntimeError):
    """The descent condition failed for every tested prox weight."""


@dataclass(frozen=True)
class StepStrategy:
    """Step-size selection rule: fixed weight or one of the adaptive schemes."""

    kind: str = BT_0
    L_fixed: float = 1.0
    L_hat0: float = 0.01
    theta: float = 0.5
    eta: float = 1e-4
    I_max: int = 40

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not (self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.I_max < 1:
            raise ValueError(f"I_max must be a positive integer, got {self.I_max}")
        if not (self.L_hat0 > 0):
            raise ValueError(f"L_hat0 must be positive, got {self.L_hat0}")
        if self.L_fixed < 0:
            raise ValueError(f"L_fixed must be nonnegative, got {self.L_fixed}")

    @classmethod
    def fixed(cls, L, **kw):
        return cls(kind=FIXED, L_fixed=L, **kw)

    @classmethod
    def backtracking(cls, L_hat0=0.01, **kw):
        return cls(kind=BT, L_hat0=L_hat0, **kw)

    @classmethod
    def widening(cls, L_hat0=0.01, **kw):
        return cls(kind=BT_W, L_hat0=L_hat0, **kw)

    @classmethod
    def zero_first(cls, L_hat0=0.01, **kw):
        return cls(kind=BT_0, L_hat0=L_hat0, **kw)


@dataclass(frozen=True)
class SolverOptions:
    strategy: StepStrategy = field(default_factory=StepStrategy)
    max_iterations: int = 10_000
    stop_tol: float = 1e-12
    initial_control: object = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not (self.stop_tol > 0):
            raise ValueError("stop_tol must be positive")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    L: float
    trials: int
    f: float
    g: float
    F: float
    support: float
    step_norm: float
    chi_dist: float
    pde_solves: int


@dataclass(eq=False)
class SolveReport:
    records: list
    initial_F: float
    final_control: object
    final_f: float
    final_g: float
    final_F: float
    termination: str
    pde_solves: int
    fp_residual: float = None
    fp_residual_L: float = None
    monotonicity_violations: int = 0

    @property
    def iterations(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]


def descent_ok(F_k, F_next, u_k, u_next, eta):
    """Decrease test  eta*||u_next - u_k||^2 <= F_k - F_next."""
    return eta * u_next.diff_norm(u_k) ** 2 <= F_k - F_next


def iht_step(problem, u_k, grad, L):
    """Exact global solution of the pointwise subproblem at prox weight L.

    Applies the canonical (tie -> 0) scalar prox per cell: hard thresholding
    for the support penalty, soft thresholding in l1 mode, the 2-vector prox
    per strip in switching mode.
    """
    s = problem.spec
    if L < 0:
        raise ValueError(f"prox weight must be nonnegative, got {L}")
    if L + s.alpha <= 0:
        raise ValueError("L + alpha must be positive")
    if L == 0.0 and s.alpha == 0.0 and math.isinf(s.bound):
        raise ValueError("L = 0 with alpha = 0 and no bound leaves the subproblem non-coercive")
    if s.penalty == problemmod.L0:
        values = proxmod.prox_l0_array(grad.values, u_k.values, L, s.alpha, s.beta, s.bound)
        return fem.ControlField(u_k.mesh, values)
    if s.penalty == problemmod.L1:
        values = proxmod.prox_l1_array(grad.values, u_k.values, L, s.alpha, s.beta, s.bound)
        return fem.ControlField(u_k.mesh, values)
    u1, u2 = proxmod.prox_switch_arrays(
        grad.u1, grad.u2, u_k.u1, u_k.u2, L, s.alpha, s.beta
    )
    return problemmod.SwitchingControl(u_k.layout, np.stack([u1, u2]))


def _zero_step_legal(spec):
    # the pointwise prox divides by L + alpha, so the zero-weight trial
    # needs alpha > 0 no matter the bound
    return spec.alpha > 0


def select_step(problem, strategy, u_k, grad, F_k, flat_tol=0.0):
    """Pick the prox weight for one iteration.

    Returns (L, u_next, f_next, trials).  FIXED applies its weight without a
    test.  BT starts at L_hat0 and multiplies by 1/theta until the decrease
    condition holds.  BT-W additionally widens an accepted initial weight by
    theta up to I_max times, keeping the last accepted value.  BT-0 tries
    L = 0 before falling back to BT-W.

    In exact arithmetic the decrease condition holds for every weight above
    the gradient Lipschitz constant, so a search that rejects the whole
    ladder can only mean one of two things: the objective is flat to within
    rounding along it (the iterate is numerically stationary), or gradient
    and objective are inconsistent.  The first case is detected through
    flat_tol (a trial whose objective matches F_k within flat_tol) and
    reported as a zero step at the current point; the second raises
    StepSearchError.
    """
    trials = 0
    flattest = math.inf

    def attempt(L):
        nonlocal trials, flattest
        u_t = iht_step(problem, u_k, grad, L)
        f_t = problem.eval_f(u_t)
        trials += 1
        F_t = f_t + problem.eval_g(u_t)
        flattest = min(flattest, abs(F_t - F_k))
        ok = descent_ok(F_k, F_t, u_k, u_t, strategy.eta)
        return u_t, f_t, ok

    if strategy.kind == FIXED:
        u_t = iht_step(problem, u_k, grad, strategy.L_fixed)
        f_t = problem.eval_f(u_t)
        return strategy.L_fixed, u_t, f_t, 1

    if strategy.kind == BT_0 and _zero_step_legal(problem.spec):
        u_t, f_t, ok = attempt(0.0)
        if ok:
            return 0.0, u_t, f_t, trials

    L = strategy.L_hat0
    u_t, f_t, ok = attempt(L)
    if ok:
        if strategy.kind == BT:
            return L, u_t, f_t, trials
        # widening: decrease L while the condition keeps holding
        accepted = (L, u_t, f_t)
        for _ in range(strategy.I_max):
            L_try = accepted[0] * strategy.theta
            u_w, f_w, ok_w = attempt(L_try)
            if not ok_w:
                break
            accepted = (L_try, u_w, f_w)
        return accepted + (trials,)

    for _ in range(MAX_INCREASES):
        L = L / strategy.theta
        u_t, f_t, ok = attempt(L)
        if ok:
            return L, u_t, f_t, trials
    if flattest <= flat_tol:
        # numerically stationary: no tested weight moves the objective
        # beyond the stopping tolerance, so stay put and let the stop rule fire
        return L, u_k, F_k - problem.eval_g(u_k), trials
    raise StepSearchError(
        f"descent condition failed for every L up to {L:g}; gradient and objective disagree"
    )


def fp_residual(problem, u, L, grad=None):
    """Stationarity residual of u under the thresholding map at weight L.

    Per cell the residual is (L+alpha) times the distance from the cell value
    to the prox solution set, i.e. the size of the violated optimality
    relation measured in the gradient scale (so it does not vanish trivially
    as L grows); the maximum over cells is returned.  Zero exactly when every
    cell satisfies the fixed-point inclusion.
    """
    s = problem.spec
    if L + s.alpha <= 0:
        raise ValueError("L + alpha must be positive")
    if grad is None:
        grad = problem.grad_f(u)
    w = L + s.alpha
    if s.penalty == problemmod.L0:
        zero_ok, v, v_ok = proxmod.prox_l0_set_arrays(
            grad.values, u.values, L, s.alpha, s.beta, s.bound
        )
        dist = np.where(zero_ok, np.abs(u.values), np.inf)
        dist = np.minimum(dist, np.where(v_ok, np.abs(u.values - v), np.inf))
        return w * float(dist.max(initial=0.0))
    if s.penalty == problemmod.L1:
        v = proxmod.prox_l1_array(grad.values, u.values, L, s.alpha, s.beta, s.bound)
        return w * float(np.abs(u.values - v).max(initial=0.0))
    v1, v2 = proxmod.prox_switch_arrays(grad.u1, grad.u2, u.u1, u.u2, L, s.alpha, s.beta)
    return w * float(
        max(np.abs(u.u1 - v1).max(initial=0.0), np.abs(u.u2 - v2).max(initial=0.0))
    )


def run(problem, options: SolverOptions = None, compute_fp_residual=True):
    """Iterate until |F_{k+1} - F_k| <= stop_tol or the iteration budget is hit.

    Every iteration is logged (accepted weight, trials, f, g, F, support
    measure, step norm, indicator distance, cumulative PDE solves).  The
    reported solve count covers gradients and trials; the final stationarity
    residual is computed with the counter paused.
    """
    options = options or SolverOptions()
    strategy = options.strategy
    u = options.initial_control if options.initial_control is not None else problem.zero_control()

    f_k, grad = problem.value_and_grad(u)
    F_k = f_k + problem.eval_g(u)
    initial_F = F_k
    chi_prev = problem.chi(u)

    records = []
    termination = MAX_ITERATIONS
    violations = 0
    final_L = strategy.L_fixed if strategy.kind == FIXED else 0.0

    for k in range(1, options.max_iterations + 1):
        if grad is None:
            _, grad = problem.value_and_grad(u)
        L_k, u_next, f_next, trials = select_step(
            problem, strategy, u, grad, F_k, flat_tol=options.stop_tol
        )
        g_next = problem.eval_g(u_next)
        F_next = f_next + g_next
        chi_next = problem.chi(u_next)
        records.append(
            IterationRecord(
                k=k,
                L=L_k,
                trials=trials,
                f=f_next,
                g=g_next,
                F=F_next,
                support=problem.support_measure(u_next),
                step_norm=u_next.diff_norm(u),
                chi_dist=problem.chi_distance(chi_prev, chi_next),
                pde_solves=problem.budget.count,
            )
        )
        if strategy.kind == FIXED and F_next > F_k + 1e-14:
            violations += 1
            log.warning(
                "objective increased at iteration %d with fixed L=%g (dF=%.3e); "
                "the fixed weight is below the gradient Lipschitz constant",
                k, strategy.L_fixed, F_next - F_k,
            )
        stop = abs(F_next - F_k) <= options.stop_tol
        u, F_k, chi_prev, final_L = u_next, F_next, chi_next, L_k
        grad = None
        if stop:
            termination = TOLERANCE
            break

    report = SolveReport(
        records=records,
        initial_F=initial_F,
        final_control=u,
        final_f=records[-1].f,
        final_g=records[-1].g,
        final_F=F_k,
        termination=termination,
        pde_solves=problem.budget.count,
        monotonicity_violations=violations,
    )
    if compute_fp_residual:
        with problem.budget.paused():
            report.fp_residual = fp_residual(problem, u, final_L)
            report.fp_residual_L = final_L
    return report
