"""Acceptance suite: one test per criterion, each printing a PASS line.

Criterion 7 (monotone decrease and step summability) applies to every run
logged by the other criteria, so solver reports are collected in a registry
and the criterion-7 test executes last in this module.
"""

import math
import time

import numpy as np
import pytest

from l0control import fem, reference, solver
from l0control.problem import (
    ControlProblem,
    ProblemSpec,
    SwitchingProblem,
    default_target,
    switching_target,
    unsolvable_target,
)
from l0control.prox import (
    ProxParams,
    SwitchingPoint,
    box_hard_threshold,
    fp_membership,
    prox_l0,
    prox_l1,
    prox_switch,
    separation_threshold,
)
from l0control.solver import SolverOptions, StepStrategy, fp_residual, run

SEED = 123457
N_INSTANCES = 10_000

# registry of (report, eta) pairs for the log-level criterion
RUN_LOG = []


def benchmark_spec(**kw):
    base = dict(alpha=0.01, beta=0.01, bound=4.0, penalty="l0", pde=fem.DIRICHLET_POISSON,
                y_d=default_target, mesh_n=10)
    base.update(kw)
    return ProblemSpec(**base)


def solve_logged(spec, strategy=None, **run_kw):
    problem = spec if isinstance(spec, (ControlProblem, SwitchingProblem)) else (
        SwitchingProblem(spec) if spec.penalty == "switching" else ControlProblem(spec)
    )
    options = SolverOptions(strategy=strategy or StepStrategy.zero_first(0.01), **run_kw.pop("options", {}))
    report = run(problem, options, **run_kw)
    RUN_LOG.append((report, options.strategy.eta))
    return problem, report


def draw_l0_instances(rng, n):
    g = rng.uniform(-3, 3, n)
    u = rng.uniform(-2, 2, n)
    L = rng.uniform(0, 2, n)
    alpha = rng.uniform(0.01, 2, n)
    beta = rng.uniform(0.01, 2, n)
    b = rng.choice([0.6, 1.0, 1.4, math.inf], n)
    inf_rows = np.isinf(b)
    # keep the unbounded rows inside a manageable search radius
    alpha[inf_rows] = rng.uniform(0.5, 1.5, inf_rows.sum())
    L[inf_rows] = rng.uniform(0.0, 1.0, inf_rows.sum())
    g[inf_rows] = rng.uniform(-1.5, 1.5, inf_rows.sum())
    u[inf_rows] = rng.uniform(-1.0, 1.0, inf_rows.sum())
    return g, u, L, alpha, beta, b


def _oracle_penalized(a2, a1, abs_w, supp_w, b, vertex):
    """Batched reference minimum plus admitted argmin candidates."""
    finite = ~np.isinf(b)
    radius = np.where(finite, b, np.abs(vertex) + np.sqrt(supp_w / a2) + 0.5)
    out_min = np.empty(a2.shape[0])
    cands = np.empty((a2.shape[0], 5))
    cvals = np.empty((a2.shape[0], 5))
    for mask in (finite, ~finite):
        if not mask.any():
            continue
        m, c, v = reference.penalized_quadratic_batch(
            a2[mask], a1[mask], abs_w[mask], supp_w[mask], radius[mask]
        )
        out_min[mask] = m
        cands[mask] = c
        cvals[mask] = v
    return out_min, cands, cvals


def _check_against_candidates(values, objective_values, oracle_min, cands, cvals):
    """Objective within 1e-10 of the reference minimum and argument within
    1e-8 of an admitted (near-minimal) candidate.  Returns the failure count."""
    admitted = cvals <= (oracle_min + 1e-9)[:, None]
    dist = np.abs(cands - values[:, None])
    dist[~admitted] = np.inf
    bad_obj = np.abs(objective_values - oracle_min) > 1e-10
    bad_arg = dist.min(axis=1) > 1e-8
    return int(np.count_nonzero(bad_obj | bad_arg))


def test_criterion_1_prox_oracle_suite():
    """10^4 randomized instances per operator match the brute-force reference."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    failures = {}

    # prox_l0 (set-valued; every element must be a global minimizer)
    g, u, L, alpha, beta, b = draw_l0_instances(rng, N_INSTANCES)
    a2 = 0.5 * (L + alpha)
    a1 = g - L * u
    vertex = -a1 / (2 * a2)
    oracle_min, cands, cvals = _oracle_penalized(a2, a1, np.zeros_like(a2), beta, b, vertex)
    elems = []
    idx = []
    for i in range(N_INSTANCES):
        sol = prox_l0(g[i], u[i], ProxParams(L[i], alpha[i], beta[i], b[i]))
        for v in sol.values:
            elems.append(v)
            idx.append(i)
    elems = np.array(elems)
    idx = np.array(idx)
    obj = a2[idx] * elems**2 + a1[idx] * elems + beta[idx] * (elems != 0.0)
    failures["prox_l0"] = _check_against_candidates(
        elems, obj, oracle_min[idx], cands[idx], cvals[idx]
    )

    # box_hard_threshold: minimize -q*u + u^2/2 + s*(u != 0)
    q = rng.uniform(-3, 3, N_INSTANCES)
    s = rng.uniform(0, 2, N_INSTANCES)
    bb = rng.choice([0.6, 1.0, 1.4, math.inf], N_INSTANCES)
    q[np.isinf(bb)] = rng.uniform(-2.5, 2.5, int(np.isinf(bb).sum()))
    a2 = np.full(N_INSTANCES, 0.5)
    a1 = -q
    oracle_min, cands, cvals = _oracle_penalized(a2, a1, np.zeros_like(a2), s, bb, q)
    elems, idx = [], []
    for i in range(N_INSTANCES):
        for v in box_hard_threshold(q[i], s[i], bb[i]).values:
            elems.append(v)
            idx.append(i)
    elems = np.array(elems)
    idx = np.array(idx)
    obj = 0.5 * elems**2 - q[idx] * elems + s[idx] * (elems != 0.0)
    failures["box_hard_threshold"] = _check_against_candidates(
        elems, obj, oracle_min[idx], cands[idx], cvals[idx]
    )

    # prox_l1 (single-valued)
    g, u, L, alpha, gamma, b = draw_l0_instances(rng, N_INSTANCES)
    a2 = 0.5 * (L + alpha)
    a1 = g - L * u
    vertex = -a1 / (2 * a2)
    oracle_min, cands, cvals = _oracle_penalized(a2, a1, gamma, np.zeros_like(a2), b, vertex)
    vals = np.array([prox_l1(g[i], u[i], L[i], alpha[i], gamma[i], b[i]) for i in range(N_INSTANCES)])
    obj = a2 * vals**2 + a1 * vals + gamma * np.abs(vals)
    failures["prox_l1"] = _check_against_candidates(vals, obj, oracle_min, cands, cvals)

    # prox_switch (paired)
    g1 = rng.uniform(-2, 2, N_INSTANCES)
    g2 = rng.uniform(-2, 2, N_INSTANCES)
    u1 = rng.uniform(-1, 1, N_INSTANCES)
    u2 = rng.uniform(-1, 1, N_INSTANCES)
    L = rng.uniform(0, 2, N_INSTANCES)
    alpha = rng.uniform(0.01, 1, N_INSTANCES)
    beta = rng.uniform(0.01, 1, N_INSTANCES)
    o_min, cands2, cvals2 = reference.switch_batch(g1, g2, u1, u2, L, alpha, beta)
    p1 = np.empty(N_INSTANCES)
    p2 = np.empty(N_INSTANCES)
    for i in range(N_INSTANCES):
        p = prox_switch(SwitchingPoint(g1[i], g2[i]), SwitchingPoint(u1[i], u2[i]),
                        L[i], alpha[i], beta[i])
        p1[i], p2[i] = p.u1, p.u2
    obj = (
        g1 * p1 + g2 * p2
        + 0.5 * L * ((p1 - u1) ** 2 + (p2 - u2) ** 2)
        + 0.5 * alpha * (p1**2 + p2**2)
        + beta * ((p1 != 0.0) & (p2 != 0.0))
    )
    admitted = cvals2 <= (o_min + 1e-9)[:, None]
    dist = np.maximum(np.abs(cands2[:, :, 0] - p1[:, None]), np.abs(cands2[:, :, 1] - p2[:, None]))
    dist[~admitted] = np.inf
    bad = (np.abs(obj - o_min) > 1e-10) | (dist.min(axis=1) > 1e-8)
    failures["prox_switch"] = int(np.count_nonzero(bad))

    elapsed = time.perf_counter() - t0
    assert failures == {k: 0 for k in failures}, failures
    assert elapsed < 10.0, f"oracle suite took {elapsed:.1f}s (limit 10s)"
    print(f"\nACCEPTANCE 1 PASS: 4x{N_INSTANCES} prox instances match brute force ({elapsed:.1f}s)")


def test_criterion_2_sigma_separation_and_variational_inequality():
    """Every randomized prox output is 0 or at least sigma, and nonzero
    outputs satisfy the first-order inequality against all box points."""
    rng = np.random.default_rng(SEED)
    g, u, L, alpha, beta, b = draw_l0_instances(rng, N_INSTANCES)
    sep_violations = 0
    vi_violations = 0
    for i in range(N_INSTANCES):
        p = ProxParams(L[i], alpha[i], beta[i], b[i])
        sigma = separation_threshold(p)
        for v in prox_l0(g[i], u[i], p).values:
            if v != 0.0 and abs(v) < sigma - 1e-12:
                sep_violations += 1
            if v == 0.0:
                continue
            slope = g[i] + L[i] * (v - u[i]) + alpha[i] * v
            probes = [0.0, v + 1e-3, v - 1e-3]
            if not math.isinf(b[i]):
                probes += [-b[i], b[i]]
                probes = [min(max(w, -b[i]), b[i]) for w in probes]
            for w in probes:
                if slope * (w - v) < -1e-9:
                    vi_violations += 1
    assert sep_violations == 0
    assert vi_violations == 0
    print(f"\nACCEPTANCE 2 PASS: separation and variational inequality hold on {N_INSTANCES} instances")


def test_criterion_3_adjoint_gradient_check():
    """<grad f, du> matches central differences to 1e-6 relative, 20 pairs per operator."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for pde_kind in (fem.DIRICHLET_POISSON, fem.NEUMANN_HELMHOLTZ):
        problem = ControlProblem(benchmark_spec(mesh_n=16, pde=pde_kind))
        pairs = 0
        while pairs < 20:
            u = fem.ControlField(problem.mesh, rng.normal(size=problem.mesh.num_triangles))
            du = fem.ControlField(problem.mesh, rng.normal(size=problem.mesh.num_triangles))
            _, grad = problem.value_and_grad(u)
            pairing = fem.l2_inner_control(grad, du)
            eps = 1e-5
            fp = problem.eval_f(fem.ControlField(problem.mesh, u.values + eps * du.values))
            fm = problem.eval_f(fem.ControlField(problem.mesh, u.values - eps * du.values))
            fd = (fp - fm) / (2 * eps)
            if abs(fd) < 1e-3:
                # a near-orthogonal direction leaves nothing to compare at
                # this tolerance: difference-quotient rounding alone is ~1e-10
                continue
            pairs += 1
            rel = abs(pairing - fd) / abs(fd)
            worst = max(worst, rel)
            assert rel <= 1e-6, (pde_kind, rel)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"gradient check took {elapsed:.1f}s (limit 5s)"
    print(f"\nACCEPTANCE 3 PASS: 40 gradient pairs within 1e-6 (worst {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_4_fem_convergence_order():
    """Manufactured Dirichlet solution contracts by at least 3.5 per mesh doubling."""
    t0 = time.perf_counter()
    errs = []
    for n in (16, 32, 64):
        mesh = fem.build_mesh(n)
        pde = fem.assemble(mesh, fem.DIRICHLET_POISSON)
        cent = mesh.centroids()
        u = fem.ControlField(mesh, 2 * np.pi**2 * np.sin(np.pi * cent[:, 0]) * np.sin(np.pi * cent[:, 1]))
        y = fem.solve_state(pde, u)
        exact = fem.interpolate_nodal(mesh, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2))
        errs.append(fem.l2_norm_state(fem.StateField(mesh, y.values - exact.values)))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    elapsed = time.perf_counter() - t0
    assert r1 >= 3.5 and r2 >= 3.5, (r1, r2)
    assert elapsed < 5.0
    print(f"\nACCEPTANCE 4 PASS: error contraction {r1:.2f}, {r2:.2f} (>= 3.5, {elapsed:.1f}s)")


# target values for the coarse-mesh study: (n, F, support, pde_solves)
MESH_STUDY_TARGETS = [
    (10, 3.145593, 0.365000, 42),
    (20, 4.286681, 0.428750, 39),
    (40, 4.850340, 0.437812, 54),
]


def test_criterion_5_mesh_study_coarse_rows():
    """Coarse-mesh benchmark rows: F within 1%, support within 0.02, solves within 50%.

    The support and solve-count agreement certifies the iteration dynamics;
    the recorded F targets are not reproducible by any self-consistent
    quadrature of this problem (the objective used here is the Galerkin one;
    see the mesh-study CSV's F_vertex column for the closest cross-code
    metric), so the F sub-checks are expected to fail and are reported in
    full rather than silently relaxed.
    """
    t0 = time.perf_counter()
    failures = []
    measured = []
    for n, F_target, supp_target, pde_target in MESH_STUDY_TARGETS:
        problem, report = solve_logged(benchmark_spec(mesh_n=n))
        F, supp, pde = report.final_F, report.records[-1].support, report.pde_solves
        measured.append((n, F, supp, pde))
        if abs(F - F_target) / F_target > 0.01:
            failures.append(f"n={n}: F={F:.6f} not within 1% of {F_target}")
        if abs(supp - supp_target) > 0.02:
            failures.append(f"n={n}: support={supp:.6f} not within 0.02 of {supp_target}")
        if abs(pde - pde_target) > 0.5 * pde_target:
            failures.append(f"n={n}: pde_solves={pde} not within 50% of {pde_target}")
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    assert not failures, "; ".join(failures) + f" | measured {measured}"
    print(f"\nACCEPTANCE 5 PASS: coarse mesh rows reproduced ({elapsed:.1f}s)")


BETA_TREND_TARGETS = [(0.5, 0.0), (0.1, 0.068926), (0.05, 0.173892), (0.01, 0.444780)]


def test_criterion_6_beta_trend():
    """Support measures across the unconstrained beta sweep at n = 80."""
    t0 = time.perf_counter()
    worst = 0.0
    for beta, target in BETA_TREND_TARGETS:
        _, report = solve_logged(benchmark_spec(mesh_n=80, beta=beta, bound=math.inf))
        supp = report.records[-1].support
        worst = max(worst, abs(supp - target))
        assert abs(supp - target) <= 0.03, (beta, supp, target)
    elapsed = time.perf_counter() - t0
    assert elapsed < 180.0
    print(f"\nACCEPTANCE 6 PASS: beta-sweep supports within 0.03 (worst {worst:.4f}, {elapsed:.1f}s)")


def test_criterion_8_unsolvable_configuration():
    """The convexified solution is stationary for no tested weight, and the
    iteration converges to the minimizer of the smooth part."""
    t0 = time.perf_counter()
    alpha = beta = 0.01
    spec = benchmark_spec(alpha=alpha, beta=beta, bound=math.inf, pde=fem.NEUMANN_HELMHOLTZ,
                          y_d=unsolvable_target(alpha, beta), mesh_n=40)
    problem = ControlProblem(spec)
    ubar = fem.ControlField(problem.mesh, np.full(problem.mesh.num_triangles, math.sqrt(beta / alpha)))
    grad = problem.grad_f(ubar)
    residuals = {L: fp_residual(problem, ubar, L, grad=grad) for L in (0.01, 0.1, 1.0, 10.0)}
    for L, r in residuals.items():
        assert r > 1e-3, (L, r)

    _, report = solve_logged(problem)
    smooth_min = spec.y_d(0.0, 0.0) / (1 + alpha)
    dist = math.sqrt(problem.mesh.triangle_area
                     * float(((report.final_control.values - smooth_min) ** 2).sum()))
    elapsed = time.perf_counter() - t0
    assert dist <= 1e-3, dist
    assert elapsed < 30.0
    print(f"\nACCEPTANCE 8 PASS: residuals {min(residuals.values()):.2e}.. > 1e-3, "
          f"final distance {dist:.2e} ({elapsed:.1f}s)")


def test_criterion_9_pareto_dominance():
    """Across the geometric beta grid, every l1 solution with positive support
    is dominated by some l0 solution in (f, support)."""
    t0 = time.perf_counter()
    betas = [0.5 * 0.7**l for l in range(16)]
    points = {}
    for kind in ("l0", "l1"):
        pts = []
        for beta in betas:
            _, report = solve_logged(
                benchmark_spec(mesh_n=40, beta=beta, penalty=kind),
                compute_fp_residual=False,
            )
            pts.append((report.final_f, report.records[-1].support))
        points[kind] = pts
    undominated = []
    for beta, (f1, m1) in zip(betas, points["l1"]):
        if m1 <= 0.0:
            continue
        if not any(
            f0 <= f1 and m0 <= m1 and (f0 < f1 or m0 < m1) for f0, m0 in points["l0"]
        ):
            undominated.append((beta, f1, m1))
    elapsed = time.perf_counter() - t0
    assert not undominated, undominated
    assert elapsed < 300.0
    print(f"\nACCEPTANCE 9 PASS: all positive-support l1 points dominated ({elapsed:.1f}s)")


def test_criterion_10_switching_overlap():
    """Large beta removes the overlap exactly; small beta leaves a large one."""
    t0 = time.perf_counter()
    overlaps = {}
    for beta in (0.1, 0.001):
        spec = ProblemSpec(alpha=1e-5, beta=beta, bound=math.inf, penalty="switching",
                           pde=fem.DIRICHLET_POISSON, y_d=switching_target, mesh_n=40)
        _, report = solve_logged(spec)
        overlaps[beta] = report.records[-1].support
    elapsed = time.perf_counter() - t0
    assert overlaps[0.1] == 0.0, overlaps
    assert overlaps[0.001] > 0.3, overlaps
    assert elapsed < 60.0
    print(f"\nACCEPTANCE 10 PASS: overlap {overlaps[0.1]} at beta=0.1, "
          f"{overlaps[0.001]:.3f} at beta=0.001 ({elapsed:.1f}s)")


def test_criterion_11_fixed_point_monotonicity_in_weight():
    """Membership in the stationarity conditions persists at 2L and 10L."""
    rng = np.random.default_rng(SEED)
    checked = 0
    while checked < 1000:
        alpha = rng.uniform(0.01, 2)
        beta = rng.uniform(0.01, 2)
        b = float(rng.choice([0.7, 1.3, math.inf]))
        L = rng.uniform(0.0, 2)
        p = ProxParams(L, alpha, beta, b)
        w = L + alpha
        root = math.sqrt(2 * beta / w)
        candidates = [(0.0, rng.uniform(-0.99, 0.99) * w * min(root, b / 2 + beta / (w * b) if b < math.inf else root))]
        if root <= b:
            m = rng.uniform(root, min(b, 3 * root))
            sign = float(rng.choice([-1.0, 1.0]))
            candidates.append((sign * m, -alpha * sign * m))
        if b < math.inf:
            edge = alpha * b if root <= b else w * (b / 2 + beta / (w * b)) - L * b
            candidates.append((-b, edge + rng.uniform(0, 1)))
            candidates.append((b, -(edge + rng.uniform(0, 1))))
        for u, g in candidates:
            if not fp_membership(u, g, p):
                continue
            checked += 1
            for L2 in (2 * L + 1e-6, 10 * L + 1e-5):
                assert fp_membership(u, g, ProxParams(L2, alpha, beta, b)), (u, g, L, L2, alpha, beta, b)
    print(f"\nACCEPTANCE 11 PASS: {checked} memberships persist at 2L and 10L")


def test_criterion_12_budget_accounting():
    """A scripted 3-iteration run consumes exactly 2 per iteration plus one per trial."""
    problem = ControlProblem(benchmark_spec(mesh_n=8))
    options = SolverOptions(strategy=StepStrategy.zero_first(0.01), max_iterations=3)
    report = run(problem, options, compute_fp_residual=False)
    RUN_LOG.append((report, options.strategy.eta))
    trials = sum(report.column("trials"))
    assert report.iterations == 3
    assert report.pde_solves == 2 * 3 + trials
    assert problem.budget.count == report.pde_solves
    print(f"\nACCEPTANCE 12 PASS: pde_solves = 2*3 + {trials}")


def test_criterion_7_monotone_decrease_and_summability():
    """F never increases and the squared steps are bounded by (F0 - F_end)/eta
    on every run logged by this module (runs last by position)."""
    assert RUN_LOG, "no runs were logged"
    for report, eta in RUN_LOG:
        Fs = [report.initial_F] + report.column("F")
        for a, b in zip(Fs, Fs[1:]):
            assert b <= a + 1e-14
        steps = sum(s**2 for s in report.column("step_norm"))
        assert steps <= (Fs[0] - Fs[-1]) / eta + 1e-12
    print(f"\nACCEPTANCE 7 PASS: {len(RUN_LOG)} logged runs monotone and summable")
