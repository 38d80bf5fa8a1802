import math

import numpy as np
import pytest

from conftest import line_instance, random_fractional, subsidized_instance_and_frac
from sitefolio.fsfl import (
    ClientGraph,
    ClosenessBound,
    alpha_point_rounding,
    core_clients,
    integral_assignment,
    reduce_budgeted_to_fsfl,
    round_to_integral_facilities,
    rounding_alpha,
    solve_fsfl,
)
from sitefolio.instances import gen_hardness_instance, gen_random
from sitefolio.model import (
    FractionalSolution,
    Lp,
    Metric,
    TopL,
    subsidy_of,
    theta_of,
)


class TestAlphaPointRounding:
    def test_hand_trace_keep_both(self):
        # distances (1, 3), x = (0.6, 0.4), delta = 2 -> alpha = 2/3, kenters 2
        inst = line_instance([0.0], [1.0, 3.0], [1.0], [1.0, 1.0], delta=2.0)
        assert rounding_alpha(2.0) == pytest.approx(2.0 / 3.0)
        frac = FractionalSolution.from_xy(inst, np.array([[0.6, 0.4]]), np.array([0.7, 0.5]))
        out, bound = alpha_point_rounding(inst, frac)
        assert out.x[0] == pytest.approx([0.6, 0.4])
        assert bound.Delta[0] == pytest.approx(3.0)
        assert bound.Delta[0] <= 4 * max(1, 1 / 2.0) * frac.dist[0] + 1e-12  # 7.2
        assert np.allclose(out.y, np.minimum(1.0, frac.y / (2.0 / 3.0)))

    def test_hand_trace_cut_far_mass(self):
        inst = line_instance([0.0], [1.0, 3.0], [1.0], [1.0, 1.0], delta=2.0)
        frac = FractionalSolution.from_xy(inst, np.array([[0.8, 0.2]]), np.array([0.8, 0.2]))
        out, bound = alpha_point_rounding(inst, frac)
        assert out.x[0] == pytest.approx([1.0, 0.0])
        assert bound.Delta[0] == pytest.approx(1.0)

    def test_integral_input_unchanged(self):
        inst = line_instance([0.0], [1.0, 3.0], [1.0], [1.0, 1.0], delta=0.7)
        frac = FractionalSolution.from_xy(inst, np.array([[1.0, 0.0]]), np.array([1.0, 0.0]))
        out, bound = alpha_point_rounding(inst, frac)
        assert out.x[0] == pytest.approx([1.0, 0.0])
        assert bound.Delta[0] == pytest.approx(1.0)

    def test_mass_shift_lower_bound_on_random_subsets(self):
        # sum over F1 of xbar >= sum over F1 of x - (1 - alpha)
        rng = np.random.default_rng(0)
        for seed in range(120):
            inst, frac = subsidized_instance_and_frac(seed, n_clients=6, n_facilities=5)
            alpha = rounding_alpha(inst.delta)
            out, _ = alpha_point_rounding(inst, frac)
            for _ in range(8):
                mask = rng.random(inst.n_facilities) < 0.5
                lhs = out.x[:, mask].sum(axis=1)
                rhs = frac.x[:, mask].sum(axis=1) - (1 - alpha)
                assert (lhs >= rhs - 1e-9).all()


def graph_from_edges(n, edges, Delta):
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    feas = [np.array([j]) for j in range(n)]
    return ClientGraph(n=n, adj=adj, Delta=np.array(Delta, dtype=float), feas=feas)


class TestCoreClients:
    def test_path_hand_trace(self):
        # path a-b-c with Delta = (1, 2, 3): a is core; b and c hang off it
        g = graph_from_edges(3, [(0, 1), (1, 2)], [1.0, 2.0, 3.0])
        dec = core_clients(g)
        assert dec.core == (0,)
        assert dec.paths[1] == (1, 0)
        assert dec.path_delta[1] == pytest.approx(3.0)
        assert dec.paths[2] == (2, 1, 0)
        assert dec.path_delta[2] == pytest.approx(6.0)
        assert dec.path_delta[1] <= 2 * 2.0 and dec.path_delta[2] <= 2 * 3.0

    def test_edgeless_graph_all_core(self):
        g = graph_from_edges(4, [], [3.0, 1.0, 2.0, 0.5])
        dec = core_clients(g)
        assert sorted(dec.core) == [0, 1, 2, 3]
        assert all(dec.paths[j] == (j,) for j in range(4))

    def test_two_disconnected_edges(self):
        g = graph_from_edges(4, [(0, 1), (2, 3)], [1.0, 5.0, 1.0, 5.0])
        dec = core_clients(g)
        assert sorted(dec.core) == [0, 2]

    def test_empty_graph(self):
        g = graph_from_edges(0, [], [])
        dec = core_clients(g)
        assert dec.core == ()

    @pytest.mark.parametrize("seed", range(60))
    def test_decomposition_properties_random_graphs(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 14))
        edges = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < 0.3
        ]
        Delta = rng.random(n) * 10
        g = graph_from_edges(n, edges, Delta)
        dec = core_clients(g)
        core = set(dec.core)
        # 1: independence
        for a, b in edges:
            assert not (a in core and b in core)
        # 2: Delta(paths_j) <= 2 Delta_j, path ends at a core client
        for j in range(n):
            assert dec.paths[j][-1] in core
            assert dec.path_delta[j] <= 2 * Delta[j] + 1e-9
            assert dec.path_delta[j] == pytest.approx(sum(Delta[v] for v in dec.paths[j]))
        # 3: neighbors of a core client have Delta >= half of its Delta
        for a, b in edges:
            for jstar, j in ((a, b), (b, a)):
                if jstar in core:
                    assert Delta[j] >= 0.5 * Delta[jstar] - 1e-9


class TestRoundToIntegralFacilities:
    def test_disjoint_singletons_identity(self):
        # every client already glued to its own facility
        inst = line_instance([0.0, 10.0, 20.0], [0.0, 10.0, 20.0],
                             [1.0] * 3, [1.0] * 3, delta=1.0)
        x = np.eye(3)
        out, bound5, graph, core = round_to_integral_facilities(
            inst, x, np.ones(3), ClosenessBound(np.zeros(3))
        )
        assert sorted(core.core) == [0, 1, 2]
        assert np.allclose(out.x, np.eye(3))
        assert np.allclose(out.y, 1.0)

    def test_two_clients_sharing_one_facility(self):
        # both clients split between a shared facility and their own; equal Delta
        inst = line_instance([0.0, 2.0], [0.0, 1.0, 2.0], [1.0, 1.0],
                             [1.0, 0.5, 1.0], delta=1.0)
        x = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        Delta = np.array([2.0, 2.0])
        out, bound5, graph, core = round_to_integral_facilities(
            inst, x, np.array([0.5, 1.0, 0.5]), ClosenessBound(Delta)
        )
        assert len(core.core) == 1
        opened = np.where(out.y > 0.5)[0]
        assert len(opened) == 1 and opened[0] == 1  # cheapest shared facility
        assert np.allclose(out.x[:, 1], 1.0)
        assert bound5.holds_for(inst, out.x)

    @pytest.mark.parametrize("seed", range(100))
    def test_loss_never_increases_and_5delta_close(self, seed):
        inst, frac = subsidized_instance_and_frac(
            seed, n_clients=8, n_facilities=4, n_groups=2
        )
        xbar, bound = alpha_point_rounding(inst, frac)
        out, bound5, graph, core = round_to_integral_facilities(
            inst, xbar.x, xbar.y, bound
        )
        assert out.loss.sum() <= xbar.loss.sum() + 1e-9
        assert bound5.holds_for(inst, out.x)
        assert np.allclose(out.x.sum(axis=1), 1.0)
        # integral facilities
        assert set(np.unique(np.round(out.y, 9))) <= {0.0, 1.0}
        # feas sets of distinct core clients are disjoint
        seen = set()
        for j_star in core.core:
            fs = set(int(f) for f in graph.feas[j_star])
            assert not (fs & seen)
            seen |= fs


class TestIntegralAssignment:
    def test_integral_input_identity(self):
        inst = line_instance([0.0, 5.0], [0.0, 5.0], [1.0, 2.0], [1.0, 1.0])
        x = np.eye(2)
        sol = integral_assignment(inst, x, np.ones(2))
        assert sol.assign == (0, 1)

    def test_half_half_split_goes_to_one(self):
        inst = line_instance([0.0], [0.0, 1.0], [2.0], [1.0, 1.0])
        sol = integral_assignment(inst, np.array([[0.5, 0.5]]), np.ones(2))
        assert sol.assign[0] in (0, 1)
        assert sol.open == frozenset({0, 1})

    @pytest.mark.parametrize("seed", range(100))
    def test_load_bound_random_schedules(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        m = int(rng.integers(1, 5))
        inst = gen_random(seed, n_clients=n, n_facilities=m, delta=1.0)
        frac = random_fractional(inst, rng)
        y = np.ones(m)
        sol = integral_assignment(inst, frac.x, y)
        for f in range(m):
            Cf = np.where(frac.x[:, f] > 1e-12)[0]
            frac_load = float(frac.x[:, f] @ inst.revenues)
            int_load = sum(inst.revenues[j] for j in Cf if sol.assign[j] == f)
            extra = max((inst.revenues[j] for j in Cf), default=0.0)
            assert int_load <= frac_load + extra + 1e-9
            # support preservation
        for j in range(n):
            assert frac.x[j, sol.assign[j]] > 1e-12

    @pytest.mark.parametrize("seed", range(40))
    def test_subsidy_grows_by_at_most_theta(self, seed):
        inst, frac = subsidized_instance_and_frac(
            seed, n_clients=8, n_facilities=4, cost_range=(2.0, 4.0)
        )
        xbar, bound = alpha_point_rounding(inst, frac)
        xp, bound5, _, _ = round_to_integral_facilities(inst, xbar.x, xbar.y, bound)
        sol = integral_assignment(inst, xp.x, xp.y)
        theta = theta_of(inst)
        assert subsidy_of(inst, sol) <= xp.subsidy(inst) + theta + 1e-9


class TestPipeline:
    def test_profitable_instance_ratio_one(self):
        # two fat clients sitting on two cheap facilities: optimum is free
        inst = line_instance([0.0, 10.0], [0.0, 10.0], [5.0, 5.0], [1.0, 1.0],
                             delta=0.5)
        sol, trace = solve_fsfl(inst, Lp(1.0))
        assert subsidy_of(inst, sol) == 0.0
        assert trace.stages[-1].objective == pytest.approx(trace.relaxation_value, abs=1e-9)
        assert sol.assign == (0, 1)

    def test_hardness_instance_pipeline_bicriteria(self):
        inst = gen_hardness_instance([1, 2, 3], delta=0.25)
        sol, trace = solve_fsfl(inst, Lp(1.0))
        theta = theta_of(inst)
        assert subsidy_of(inst, sol) <= 2 * 0.25 + theta + 1e-9

    @pytest.mark.parametrize("seed", range(24))
    def test_pipeline_certificates(self, seed):
        delta = [0.1, 0.5, 1.0, 2.0][seed % 4]
        spec = [Lp(1.0), Lp(2.0), Lp(math.inf), TopL(2)][seed % 4]
        inst = gen_random(seed, n_clients=8, n_facilities=4, n_groups=3, delta=delta)
        sol, trace = solve_fsfl(inst, spec)
        theta = trace.theta
        assert subsidy_of(inst, sol) <= 2 * delta + theta + 1e-9
        bound = 20.0 * max(1.0, 1.0 / delta)
        assert trace.stages[-1].objective <= bound * trace.relaxation_value + 1e-9
        # per-stage ledger
        d = trace.stages[0].dist
        st2 = trace.stage("alpha_rounding")
        assert (st2.closeness.Delta <= 4 * max(1, 1 / delta) * d + 1e-9).all()
        assert st2.subsidy <= 2 * delta + 1e-9
        st3 = trace.stage("integral_facilities")
        assert st3.closeness.holds_for(inst, st3.x)
        assert st3.subsidy <= 2 * delta + 1e-9
        st4 = trace.stage("integral_assignment")
        assert st4.subsidy <= 2 * delta + theta + 1e-9
        sup = st3.x > 1e-12
        for j, f in enumerate(sol.assign):
            assert sup[j, f]


class TestPreOpenedAccounting:
    def test_counted_certificates_with_pre_opened_facilities(self):
        """With pre-opened facilities excluded from the loss ledger, the
        pipeline still meets the counted subsidy bound and never lets the
        counted loss grow at the facility-opening stage (this is why the
        opening rule prefers pre-opened facilities under that accounting)."""
        rng = np.random.default_rng(777)
        checked = 0
        for seed in range(300):
            delta = [0.1, 0.3, 0.5, 1.0][seed % 4]
            n = int(rng.integers(5, 11))
            m = int(rng.integers(3, 6))
            t = int(rng.integers(1, 5))
            inst = gen_random(seed, n_clients=n, n_facilities=m, n_groups=t,
                              delta=delta, pre_opened_prob=0.4,
                              cost_range=(0.5, 3.0), revenue_range=(0.05, 0.8))
            if not inst.pre_opened.any():
                continue
            checked += 1
            spec = [Lp(1.0), Lp(2.0), Lp(math.inf), TopL(min(2, t))][seed % 4]
            sol, trace = solve_fsfl(inst, spec)
            assert subsidy_of(inst, sol) <= 2 * delta + trace.theta + 1e-9
            st2 = trace.stage("alpha_rounding")
            st3 = trace.stage("integral_facilities")
            counted = inst.counted()
            assert st3.loss[counted].sum() <= st2.loss[counted].sum() + 1e-9
            assert st3.closeness.holds_for(inst, st3.x)
        assert checked >= 200


class TestVersusExactOptimum:
    @pytest.mark.parametrize("seed", range(20))
    def test_ratio_against_bruteforce_optimum(self, seed):
        # delta = 0.5: pipeline value within 40 = 20 max(1, 1/delta) of the
        # exhaustively certified optimum, and within the subsidy relaxation
        from sitefolio.bruteforce import exact_fsfl
        from sitefolio.model import evaluate_objective, group_distances

        inst = gen_random(seed, n_clients=7, n_facilities=3, n_groups=2, delta=0.5,
                          cost_range=(1.0, 2.5), revenue_range=(0.15, 0.6))
        spec = Lp(2.0) if seed % 2 else Lp(1.0)
        res = exact_fsfl(inst, spec)
        assert res.certified
        if not res.feasible:
            return
        sol, trace = solve_fsfl(inst, spec)
        got = evaluate_objective(spec, group_distances(inst, sol))
        assert got <= 40.0 * res.objective + 1e-9
        assert subsidy_of(inst, sol) <= 2 * inst.delta + trace.theta + 1e-9


class TestBudgetedReduction:
    def _metric(self, n, m, seed=0):
        rng = np.random.default_rng(seed)
        return Metric("euclidean", points=rng.random((n + m, 2)))

    def test_k_median_mapping(self):
        # k-median with k = 2 and unit costs: r_j = 1/|C|, delta = 1
        inst, scale = reduce_budgeted_to_fsfl(
            [f"c{j}" for j in range(5)], ["f0", "f1", "f2"], [1.0, 1.0, 1.0],
            self._metric(5, 3), budget=2.0,
        )
        assert scale == 1.0
        assert np.allclose(inst.revenues, 0.2)
        assert inst.delta == pytest.approx(1.0)
        assert inst.count_all_losses

    def test_formula_example(self):
        inst, _ = reduce_budgeted_to_fsfl(
            [f"c{j}" for j in range(4)], ["f0", "f1"], [1.0, 2.0],
            self._metric(4, 2), budget=3.0,
        )
        assert np.allclose(inst.revenues, 0.25)
        assert inst.delta == pytest.approx(2.0)

    def test_scaling_recorded(self):
        inst, scale = reduce_budgeted_to_fsfl(
            ["c0"], ["f0", "f1"], [2.0, 4.0], self._metric(1, 2), budget=5.0
        )
        assert scale == pytest.approx(2.0)
        assert np.allclose(inst.costs, [1.0, 2.0])
        assert inst.delta == pytest.approx(5.0 / 2.0 - 1.0)

    def test_budget_below_cheapest_rejected(self):
        from sitefolio.model import ModelError

        with pytest.raises(ModelError):
            reduce_budgeted_to_fsfl(["c0"], ["f0"], [2.0], self._metric(1, 1), budget=1.0)

    def test_pipeline_runs_on_reduced_instance(self):
        # pure-model accounting (count_all_losses): the certificates still hold
        inst, _ = reduce_budgeted_to_fsfl(
            [f"c{j}" for j in range(6)], [f"f{i}" for i in range(3)],
            [1.0, 1.4, 2.0], self._metric(6, 3, seed=4), budget=2.5,
        )
        sol, trace = solve_fsfl(inst, Lp(2.0))
        assert subsidy_of(inst, sol) <= 2 * inst.delta + trace.theta + 1e-9
        bound = 20.0 * max(1.0, 1.0 / inst.delta)
        assert trace.stages[-1].objective <= bound * trace.relaxation_value + 1e-9
