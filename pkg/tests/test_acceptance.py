"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Tolerances are pinned here, not configurable.  The suite is ordered so the
long geo pipeline run comes last.
"""

import math
import time

import numpy as np
import pytest

from conftest import random_fractional, subsidized_instance_and_frac
from sitefolio.bruteforce import ConicGridFamily, cached_frontier, portfolio_necessity
from sitefolio.documents import (
    desert_reduction_table,
    distance_reduction_table,
    portfolio_to_doc,
    render_report,
)
from sitefolio.fsfl import (
    alpha_point_rounding,
    core_clients,
    integral_assignment,
    round_to_integral_facilities,
    rounding_alpha,
    solve_fsfl,
)
from sitefolio.geo import GeoParams, build_geo_instance, gen_synthetic_state, medical_deserts
from sitefolio.instances import (
    fsfl_lower_bound_closure,
    gen_conic_lower_bound,
    gen_fsfl_lower_bound,
    gen_random,
    gen_topl_gap,
)
from sitefolio.lp import SolverSettings
from sitefolio.model import (
    Lp,
    Metric,
    Solution,
    TopL,
    evaluate_objective,
    evaluate_objective_rows,
    group_distances,
    subsidy_of,
)
from sitefolio.portfolio import (
    ConicClassSpec,
    build_conic_portfolio,
    build_fsfl_portfolio,
)
from sitefolio.relaxation import solve_relaxation


def report(line: str) -> None:
    print(f"\n[PASS] {line}")


def test_criterion_interp_stepping_guarantee():
    """Exact-oracle stepping portfolios cover a 60-point p-grid within 1.25."""
    t0 = time.time()
    rng = np.random.default_rng(20240901)
    p_grid = np.concatenate([np.linspace(1.0, 64.0, 59), [math.inf]])
    assert len(p_grid) == 60
    size_bound = math.floor(math.log(8) / math.log(1.25)) + 1
    assert size_bound == 10
    worst = 1.0
    max_size = 0
    sizes = []
    for seed in range(50):
        n = int(rng.integers(6, 11))
        m = int(rng.integers(2, 5))
        t = int(rng.integers(2, 9))
        # cost/revenue ranges chosen so the subsidy genuinely binds: the
        # feasible frontier has up to ~25 points and portfolios reach size 3
        inst = gen_random(seed, n_clients=n, n_facilities=m, n_groups=t, delta=0.5,
                          cost_range=(1.0, 2.5), revenue_range=(0.15, 0.6))
        port = build_fsfl_portfolio(inst, epsilon=0.25, oracle="exact")
        assert len(port.entries) <= size_bound
        max_size = max(max_size, len(port.entries))
        sizes.append(len(port.entries))
        fr = cached_frontier(inst)
        for p in p_grid:
            spec = Lp(float(p))
            opt = float(evaluate_objective_rows(spec, fr.H).min())
            got = min(
                float(evaluate_objective_rows(spec, e.h[None, :])[0])
                for e in port.entries
            )
            assert got <= 1.25 * opt + 1e-9, (seed, p, got, opt)
            worst = max(worst, got / opt if opt > 0 else 1.0)
    elapsed = time.time() - t0
    assert elapsed < 120.0
    assert max_size >= 2  # the stepping machinery is genuinely exercised
    report(
        f"Interpolating stepping: 50 instances x 60-p grid covered within 1.25 "
        f"(worst factor {worst:.4f}, sizes up to {max_size} <= {size_bound}, "
        f"{sum(1 for s in sizes if s > 1)} multi-entry, {elapsed:.1f}s)"
    )


def test_criterion_conic_mesh_guarantee():
    """Conic mesh on the three polynomial base objectives (u = 2), eps = 0.5."""
    t0 = time.time()
    grid = np.linspace(0.0, 1.0, 4001)
    H = np.stack([grid + 1.0, grid**2 + 1.0, grid**3 - grid**2 + 2.0])

    def oracle(lam):
        vals = lam @ H
        i = int(np.argmin(vals))
        return float(grid[i]), H[:, i]

    spec = ConicClassSpec(N=3, u=2.0, epsilon=0.5)
    port = build_conic_portfolio(oracle, spec)
    assert port.certificate["mesh_cells"] <= spec.size_bound()
    rng = np.random.default_rng(7)
    worst = 1.0
    for _ in range(1000):
        lam = rng.dirichlet(np.ones(3))
        entry = port.entry_for_weights(lam, spec)
        val = float(lam @ entry.h)
        opt = float((lam @ H).min())
        assert val <= 1.5 * opt + 1e-12
        worst = max(worst, val / opt)
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(
        f"Conic mesh: 1000 random simplex weights covered within 1.5 "
        f"(worst {worst:.4f}, mesh {port.certificate['mesh_cells']} <= "
        f"{spec.size_bound():.0f}, {elapsed:.1f}s)"
    )


def test_criterion_pipeline_stage_ledger():
    """Bicriteria pipeline and per-stage ledger on 200 seeded instances."""
    t0 = time.time()
    rng = np.random.default_rng(555)
    violations = 0
    for seed in range(200):
        delta = [0.1, 0.5, 1.0, 2.0][seed % 4]
        n = int(rng.integers(6, 11))
        m = int(rng.integers(3, 6))
        t = int(rng.integers(1, 5))
        spec = [Lp(1.0), Lp(2.0), Lp(math.inf), TopL(min(2, t)), Lp(3.0)][seed % 5]
        inst = gen_random(seed, n_clients=n, n_facilities=m, n_groups=t, delta=delta)
        sol, trace = solve_fsfl(inst, spec)
        theta = trace.theta
        factor = max(1.0, 1.0 / delta)
        checks = [
            subsidy_of(inst, sol) <= 2 * delta + theta + 1e-9,
            trace.stages[-1].objective <= 20.0 * factor * trace.relaxation_value + 1e-9,
        ]
        d = trace.stages[0].dist
        st1, st2 = trace.stage("relaxation"), trace.stage("alpha_rounding")
        st3, st4 = trace.stage("integral_facilities"), trace.stage("integral_assignment")
        checks += [
            st1.subsidy <= delta + 1e-9,
            (st2.closeness.Delta <= 4 * factor * d + 1e-9).all(),
            st2.subsidy <= 2 * delta + 1e-9,
            st3.closeness.holds_for(inst, st3.x),
            bool((st3.closeness.Delta <= 20 * factor * d + 1e-9).all()),
            st3.subsidy <= 2 * delta + 1e-9,
            st4.subsidy <= 2 * delta + theta + 1e-9,
            all((st3.x > 1e-12)[j, f] for j, f in enumerate(sol.assign)),
        ]
        violations += sum(1 for ok in checks if not ok)
    elapsed = time.time() - t0
    assert violations == 0
    assert elapsed < 300.0
    report(f"Pipeline ledger: 200 instances, 0 violations ({elapsed:.1f}s)")


def test_criterion_alpha_rounding_properties():
    violations = 0
    for seed in range(500):
        inst, frac = subsidized_instance_and_frac(
            seed, n_clients=int(3 + seed % 8), n_facilities=int(2 + seed % 4)
        )
        out, bound = alpha_point_rounding(inst, frac)
        factor = 4.0 * max(1.0, 1.0 / inst.delta)
        if not (bound.Delta <= factor * frac.dist + 1e-9).all():
            violations += 1
        if out.counted_loss(inst) > 2 * inst.delta * inst.total_revenue + 1e-9:
            violations += 1
        if not bound.holds_for(inst, out.x):
            violations += 1
    assert violations == 0
    report("Alpha-point rounding: closeness and loss bounds hold on 500 seeds")


def test_criterion_core_decomposition_properties():
    from sitefolio.fsfl import ClientGraph

    violations = 0
    for seed in range(500):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 16))
        Delta = rng.random(n) * 10
        adj = [set() for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.25:
                    adj[i].add(j)
                    adj[j].add(i)
        g = ClientGraph(n=n, adj=adj, Delta=Delta, feas=[np.array([j]) for j in range(n)])
        dec = core_clients(g)
        core = set(dec.core)
        for i in range(n):
            if not (dec.path_delta[i] <= 2 * Delta[i] + 1e-9):
                violations += 1
            if dec.paths[i][-1] not in core:
                violations += 1
        for i in range(n):
            for j in adj[i]:
                if i in core and j in core:
                    violations += 1
                if i in core and Delta[j] < 0.5 * Delta[i] - 1e-9:
                    violations += 1
    assert violations == 0
    report("Core decomposition: independence, path and neighbor bounds hold on 500 seeds")


def test_criterion_facility_opening_properties():
    viol6 = viol7 = 0
    for seed in range(1000):
        inst, frac = subsidized_instance_and_frac(
            seed, n_clients=int(4 + seed % 6), n_facilities=int(2 + seed % 4)
        )
        xbar, bound = alpha_point_rounding(inst, frac)
        out, bound5, graph, core = round_to_integral_facilities(inst, xbar.x, xbar.y, bound)
        if not bound5.holds_for(inst, out.x):
            viol6 += 1
        if out.loss.sum() > xbar.loss.sum() + 1e-9:
            viol7 += 1
    assert viol6 == 0 and viol7 == 0
    report("Facility opening: 5-Delta closeness and loss monotonicity hold on 1000 seeds")


def test_criterion_assignment_rounding_loads():
    violations = 0
    for seed in range(500):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        m = int(rng.integers(1, 5))
        inst = gen_random(seed, n_clients=n, n_facilities=m, delta=1.0)
        frac = random_fractional(inst, rng)
        sol = integral_assignment(inst, frac.x, np.ones(m))
        for f in range(m):
            Cf = np.where(frac.x[:, f] > 1e-12)[0]
            frac_load = float(frac.x[:, f] @ inst.revenues)
            int_load = sum(inst.revenues[j] for j in Cf if sol.assign[j] == f)
            extra = max((inst.revenues[j] for j in Cf), default=0.0)
            if int_load > frac_load + extra + 1e-9:
                violations += 1
        for j in range(n):
            if frac.x[j, sol.assign[j]] <= 1e-12:
                violations += 1
    assert violations == 0
    report("Assignment rounding: per-facility load bound and support preservation on 500 seeds")


def test_criterion_mass_shift_bound():
    violations = 0
    rng = np.random.default_rng(99)
    for seed in range(500):
        inst, frac = subsidized_instance_and_frac(
            seed, n_clients=int(3 + seed % 5), n_facilities=int(3 + seed % 4)
        )
        alpha = rounding_alpha(inst.delta)
        out, _ = alpha_point_rounding(inst, frac)
        for _ in range(4):
            mask = rng.random(inst.n_facilities) < 0.5
            lhs = out.x[:, mask].sum(axis=1)
            rhs = frac.x[:, mask].sum(axis=1) - (1.0 - alpha)
            if not (lhs >= rhs - 1e-9).all():
                violations += 1
    assert violations == 0
    report("Mass shift: subset mass bounded below by -(1 - alpha) on 500 seeds")


def test_criterion_adversarial_constructions():
    t0 = time.time()
    # conic lower-bound family at N = 3: all 7 points necessary at factor 2
    pts = gen_conic_lower_bound(3)
    necessary, _ = portfolio_necessity(pts, ConicGridFamily(3), alpha=2.0)
    assert necessary == list(range(7))

    # star lower-bound instance: for each p = L/j exactly one closure pattern works
    inst = gen_fsfl_lower_bound(2.0, 515)
    gamma, L = 4.0, 2
    H = []
    for i in range(inst.n_facilities):
        sol = fsfl_lower_bound_closure(inst, i)
        assert subsidy_of(inst, sol) <= inst.delta + 1e-12
        H.append(group_distances(inst, sol).h)
    H = np.array(H)
    for j in range(1, L + 1):
        p = L / j
        vals = evaluate_objective_rows(Lp(p), H)
        opt = vals.min()
        approx = np.where(vals <= 2.0 * opt * (1 + 1e-12))[0]
        assert len(approx) == 1 and approx[0] == j, (p, vals)

    # norm-family gap points with S = 4, L = 2
    pts, S, L = gen_topl_gap(256, S=4.0, L=2)
    for ell in range(1, 257):
        vals = evaluate_objective_rows(TopL(ell), pts)
        approx = np.where(vals <= vals.min() * (1 + 1e-12))[0]
        assert set(approx.tolist()) <= {0, L - 1}
    for p in (1.0, 2.0):
        vals = evaluate_objective_rows(Lp(p), pts)
        assert int(np.argmin(vals)) == int(p) - 1
        assert vals[int(p) - 1] == pytest.approx(S ** (-p), rel=1e-9)
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(f"Adversarial constructions: exhaustive checks pass ({elapsed:.1f}s)")


def test_criterion_budget_reduction_equivalence():
    """Feasible sets of the budgeted problem and its subsidized reduction
    coincide on 200 tiny instances under exhaustive enumeration."""
    from itertools import product

    from sitefolio.fsfl import reduce_budgeted_to_fsfl

    rng = np.random.default_rng(4242)
    checked = 0
    for trial in range(200):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 4))
        pts = rng.random((n + m, 2))
        costs = rng.uniform(0.5, 2.0, size=m)
        budget = float(costs.min() + rng.uniform(0.0, costs.sum()))
        inst, scale = reduce_budgeted_to_fsfl(
            [f"c{j}" for j in range(n)],
            [f"f{i}" for i in range(m)],
            costs,
            Metric("euclidean", points=pts),
            budget,
        )
        for mask in range(1, 2**m):
            fs = [f for f in range(m) if (mask >> f) & 1]
            budget_ok = costs[fs].sum() <= budget + 1e-12
            for assign in product(fs, repeat=n):
                sol = Solution(open=frozenset(fs), assign=assign)
                fsfl_ok = subsidy_of(inst, sol) <= inst.delta + 1e-12
                assert fsfl_ok == budget_ok, (trial, fs, assign)
                checked += 1
                # objective values coincide (distances are untouched)
                d_budgeted = inst.dist_cf[np.arange(n), np.array(assign)]
                assert evaluate_objective(Lp(1.0), group_distances(inst, sol)) == \
                    pytest.approx(float(d_budgeted.sum()))
    report(f"Budget reduction: feasible-set equivalence on 200 instances ({checked} pairs)")


def test_criterion_solver_cross_check():
    """Conditional gradient vs the exact LP paths on 100 seeds."""
    t0 = time.time()
    worst_l1 = 0.0
    worst_inf = 0.0
    for seed in range(100):
        t = 2 + seed % 2  # sandwich factor t^(1/64) stays within 2%
        inst = gen_random(seed, n_clients=7, n_facilities=3, n_groups=t, delta=0.15)
        _, lp1 = solve_relaxation(inst, Lp(1.0), return_info=True)
        _, fw1 = solve_relaxation(inst, Lp(1.0), return_info=True, force_fw=True)
        rel = abs(fw1.value - lp1.value) / max(lp1.value, 1e-12)
        worst_l1 = max(worst_l1, rel)
        assert rel <= 1e-4
        _, lpi = solve_relaxation(inst, Lp(math.inf), return_info=True)
        _, fw64 = solve_relaxation(inst, Lp(64.0), return_info=True)
        rel = abs(fw64.value - lpi.value) / max(lpi.value, 1e-12)
        worst_inf = max(worst_inf, rel)
        assert rel <= 0.02
    elapsed = time.time() - t0
    report(
        f"Solver cross-check: FW L1 within {worst_l1:.2e}, p=64 sandwich within "
        f"{worst_inf:.4f} on 100 seeds ({elapsed:.1f}s)"
    )


def test_criterion_geo_pipeline_end_to_end():
    """The full geo workflow on the bundled synthetic state.

    Real state blockgroup/pharmacy data is not bundled, so this runs the
    whole pipeline at a realistic shape (300 blockgroups, 4 districts,
    t = 16, delta = 0.02) and checks the substituted criteria: a small
    portfolio, a strictly positive desert reduction for at least one entry,
    and the subsidy certificate for every entry.
    """
    t0 = time.time()
    records, sites = gen_synthetic_state(seed=2024, n_blockgroups=300, n_districts=4)
    inst = build_geo_instance(records, sites, GeoParams(delta=0.02))
    assert inst.n_groups == 16
    baseline = medical_deserts(records, sites)
    settings = SolverSettings(
        fw_gap=5e-3, max_iterations=8, pnorm_epigraph_threshold=16.0, bisection_steps=3
    )
    port = build_fsfl_portfolio(inst, epsilon=0.5, settings=settings)
    assert 1 <= len(port.entries) <= 20
    theta = port.certificate["theta"]
    bound = 2 * inst.delta + theta + 1e-9
    for e in port.entries:
        assert e.meta["subsidy"] <= bound

    doc = portfolio_to_doc(inst, port, epsilon=0.5)
    table = distance_reduction_table(doc)
    deserts = desert_reduction_table(doc)
    assert deserts is not None
    assert max(deserts["total_reduced"]) > 0  # strictly positive for >= 1 entry
    text = render_report(doc)
    assert "Reduction in desert count" in text
    elapsed = time.time() - t0
    report(
        f"Geo pipeline: {len(port.entries)} entries, deserts {baseline.total} -> "
        f"{baseline.total - max(deserts['total_reduced'])} best case, all "
        f"subsidies <= {bound:.4f} ({elapsed:.0f}s)"
    )
