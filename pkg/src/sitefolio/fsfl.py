"""Bicriteria rounding pipeline for subsidized facility placement.

Stage ledger (asserted per run by the tests, from the trace):

    stage                 x           y         distance factor   subsidy
    relaxation            fractional  fractional        1          delta
    alpha point rounding  fractional  fractional   4 max(1,1/d)   2 delta
    integral facilities   fractional  integral    20 max(1,1/d)   2 delta
    integral assignment   integral    integral    20 max(1,1/d)   2 delta + theta
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .lp import SolverSettings
from .model import (
    FEAS_EPS,
    FractionalSolution,
    Instance,
    Metric,
    ModelError,
    ObjectiveSpec,
    Solution,
    evaluate_objective,
    group_distances,
    theta_of,
)
from .relaxation import solve_relaxation


@dataclass(frozen=True)
class ClosenessBound:
    """Per-client radii: a solution is Delta-close when every positively
    assigned facility lies within Delta_j of client j."""

    Delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Delta", np.asarray(self.Delta, dtype=float))

    def holds_for(self, inst: Instance, x: np.ndarray, tol: float = 1e-9) -> bool:
        support = x > FEAS_EPS
        return bool(
            (inst.dist_cf[support] <= self.Delta[np.where(support)[0]] + tol).all()
        )

    def scaled(self, factor: float) -> "ClosenessBound":
        return ClosenessBound(self.Delta * factor)


def rounding_alpha(delta: float) -> float:
    return (delta + 2.0) / (2.0 * (delta + 1.0))


def alpha_point_rounding(inst: Instance, frac: FractionalSolution):
    """Cut each client's farthest (1 - alpha) assignment mass and rescale.

    Returns the rounded fractional solution and its closeness bound, where
    Delta_j is the largest distance left in client j's support.
    """
    alpha = rounding_alpha(inst.delta)
    n, m = inst.n_clients, inst.n_facilities
    xbar = np.zeros_like(frac.x)
    Delta = np.zeros(n)
    for j in range(n):
        order = np.lexsort((np.arange(m), inst.dist_cf[j]))
        z = np.cumsum(frac.x[j, order])
        k = int(np.searchsorted(z, alpha - 1e-12))
        k = min(k, m - 1)
        keep = order[: k + 1]
        scale = z[k]
        if scale <= 0:
            raise ModelError(f"client {j} carries no assignment mass")
        xbar[j, keep] = frac.x[j, keep] / scale
        Delta[j] = float(inst.dist_cf[j, keep][xbar[j, keep] > FEAS_EPS].max())
    ybar = np.minimum(1.0, frac.y / alpha)
    out = FractionalSolution.from_xy(inst, xbar, ybar)
    return out, ClosenessBound(Delta)


@dataclass
class ClientGraph:
    """Clients as vertices; an edge joins clients with intersecting feas sets."""

    n: int
    adj: list  # list[set[int]]
    Delta: np.ndarray
    feas: list  # list[np.ndarray] of facility indices

    @staticmethod
    def build(inst: Instance, xbar: np.ndarray, Delta: np.ndarray) -> "ClientGraph":
        support = xbar > FEAS_EPS
        share = support @ support.T
        n = inst.n_clients
        adj = [set(np.where(share[j])[0]) - {j} for j in range(n)]
        feas = [np.where(support[j])[0] for j in range(n)]
        return ClientGraph(n=n, adj=adj, Delta=np.asarray(Delta, float), feas=feas)


@dataclass(frozen=True)
class CoreDecomposition:
    core: tuple  # core client indices, in selection order
    paths: tuple  # per client: vertex path from the client to its core client
    path_delta: np.ndarray  # Delta-length of each path

    def core_of(self, j: int) -> int:
        return self.paths[j][-1]


def core_clients(graph: ClientGraph) -> CoreDecomposition:
    """Greedy arborescence decomposition.

    Repeatedly roots an arborescence at the remaining client with the smallest
    (Delta, id), grows it along edges j--j' with Delta_j >= Delta(paths_j'),
    then recurses on what is left.  Growing edges are taken in ascending
    (Delta_j, j, Delta(paths_j'), j') order for determinism.
    """
    n = graph.n
    Delta = graph.Delta
    remaining = set(range(n))
    paths: dict[int, tuple] = {}
    plen = np.zeros(n)
    core = []
    while remaining:
        j_star = min(remaining, key=lambda j: (Delta[j], j))
        core.append(j_star)
        tree = {j_star}
        paths[j_star] = (j_star,)
        plen[j_star] = Delta[j_star]
        heap = []
        for nb in graph.adj[j_star]:
            if nb in remaining and Delta[nb] >= plen[j_star] - 1e-12:
                heapq.heappush(heap, (Delta[nb], nb, plen[j_star], j_star))
        while heap:
            dj, j, pl, jp = heapq.heappop(heap)
            if j in tree or j not in remaining:
                continue
            tree.add(j)
            paths[j] = (j,) + paths[jp]
            plen[j] = Delta[j] + plen[jp]
            for nb in graph.adj[j]:
                if nb in remaining and nb not in tree and Delta[nb] >= plen[j] - 1e-12:
                    heapq.heappush(heap, (Delta[nb], nb, plen[j], j))
        remaining -= tree
    path_delta = np.array([plen[j] for j in range(n)]) if n else np.zeros(0)
    ordered = tuple(paths[j] for j in range(n))
    return CoreDecomposition(core=tuple(core), paths=ordered, path_delta=path_delta)


def _cheapest_in_feas(inst: Instance, feas: np.ndarray) -> int:
    """Facility opened for a core client.

    Under the default accounting (pre-opened losses excluded) pre-opened
    facilities are preferred: their loss is free, and choosing a new facility
    against a pre-opened one could charge the subsidy budget for loss that the
    fractional solution carried outside it.  The pure model uses plain
    (cost, id).
    """
    if inst.count_all_losses:
        key = lambda f: (inst.costs[f], f)
    else:
        key = lambda f: (not inst.pre_opened[f], inst.costs[f], f)
    return int(min(feas, key=key))


def round_to_integral_facilities(
    inst: Instance,
    xbar: np.ndarray,
    ybar: np.ndarray,
    Delta: ClosenessBound,
):
    """Open one facility per core client; assign everyone within 5 Delta.

    Returns (FractionalSolution with integral y, 5Delta bound, graph, core).
    """
    graph = ClientGraph.build(inst, np.asarray(xbar), Delta.Delta)
    core = core_clients(graph)
    n, m = inst.n_clients, inst.n_facilities
    xp = np.zeros((n, m))
    yp = np.zeros(m)
    yp[inst.pre_opened] = 1.0

    opened = {}
    for j_star in sorted(core.core, key=lambda j: (graph.Delta[j], j)):
        feas = graph.feas[j_star]
        if len(feas) == 0:
            raise ModelError(f"core client {j_star} has empty feas set")
        f_star = _cheapest_in_feas(inst, feas)
        opened[j_star] = f_star
        yp[f_star] = 1.0
        xp[j_star, f_star] = 1.0
        contrib = np.asarray(xbar)[:, feas].sum(axis=1)
        for j in graph.adj[j_star]:
            xp[j, f_star] = contrib[j]

    totals = xp.sum(axis=1)
    if (totals > 1.0 + 1e-7).any():
        raise ModelError("phase 1 over-assigned a client")  # disjoint feas guarantee
    for j in range(n):
        short = 1.0 - totals[j]
        if short > 0.0:
            xp[j, opened[core.core_of(j)]] += short

    out = FractionalSolution.from_xy(inst, xp, yp)
    return out, Delta.scaled(5.0), graph, core


# ---------------------------------------------------------------------------
# integral assignments (generalized-assignment style rounding)
# ---------------------------------------------------------------------------


def _build_slots(inst: Instance, x: np.ndarray, open_fs: np.ndarray):
    """Pack each open facility's clients (revenue-descending) into unit slots.

    Returns (slot_facility, edges) where edges[j] is a list of
    (slot index, mass) pairs; every client's masses sum to 1.
    """
    n = x.shape[0]
    slot_facility = []
    edges = [[] for _ in range(n)]
    for f in open_fs:
        clients = np.where(x[:, f] > FEAS_EPS)[0]
        if len(clients) == 0:
            continue
        order = sorted(clients, key=lambda j: (-inst.revenues[j], j))
        slot = len(slot_facility)
        slot_facility.append(int(f))
        cap = 1.0
        for j in order:
            mass = float(x[j, f])
            while mass > FEAS_EPS:
                take = min(cap, mass)
                edges[j].append([slot, take])
                mass -= take
                cap -= take
                if cap <= FEAS_EPS:
                    slot = len(slot_facility)
                    slot_facility.append(int(f))
                    cap = 1.0
    return slot_facility, edges


def _round_matching(n_jobs: int, n_slots: int, edges: list) -> list:
    """Round a fractional job-to-slot matching to an integral one.

    Job sums are exactly one, slot sums at most one, and the output assigns
    every job within its fractional support: cycle elimination first, then
    leaf-directed rounding of the remaining forest.
    """
    mass = {}
    for j, lst in enumerate(edges):
        for s, m in lst:
            mass[(j, s)] = mass.get((j, s), 0.0) + m

    def frac_items():
        return {e: m for e, m in mass.items() if 1e-9 < m < 1.0 - 1e-9}

    # cycle elimination
    while True:
        frac = frac_items()
        if not frac:
            break
        jobs_adj: dict[int, list] = {}
        slots_adj: dict[int, list] = {}
        for (j, s) in sorted(frac):
            jobs_adj.setdefault(j, []).append(s)
            slots_adj.setdefault(s, []).append(j)
        cycle = _find_cycle(jobs_adj, slots_adj)
        if cycle is None:
            break
        theta = min(mass[e] for e in cycle[1::2])
        for k, e in enumerate(cycle):
            mass[e] = mass[e] + (theta if k % 2 == 0 else -theta)
        mass = {e: m for e, m in mass.items() if m > 1e-9}

    # forest rounding: repeatedly assign the job at a leaf slot
    assign = {}
    used_slots = set()
    for (j, s), m in sorted(mass.items()):
        if m >= 1.0 - 1e-9 and j not in assign and s not in used_slots:
            assign[j] = s
            used_slots.add(s)
    for e in [e for e in mass if e[0] in assign]:
        del mass[e]  # including any dangling noise edges of assigned jobs
    while mass:
        slot_deg: dict[int, list] = {}
        for (j, s) in mass:
            slot_deg.setdefault(s, []).append(j)
        leaves = [s for s, js in slot_deg.items() if len(js) == 1 and s not in used_slots]
        if leaves:
            s = min(leaves)
            j = slot_deg[s][0]
            drop_slot = True
        else:  # numerically degenerate residue; take the job's heaviest edge
            (j, s) = max(mass, key=lambda e: (mass[e], -e[0], -e[1]))
            drop_slot = False
        assign[j] = s
        used_slots.add(s)
        for e in [e for e in mass if e[0] == j or (drop_slot and e[1] == s)]:
            del mass[e]
    missing = [j for j in range(n_jobs) if j not in assign]
    if missing:
        raise ModelError(f"matching rounding left jobs unassigned: {missing}")
    return [assign[j] for j in range(n_jobs)]


def _find_cycle(jobs_adj: dict, slots_adj: dict):
    """Any cycle in the bipartite fractional graph, as a closed edge list."""
    visited_jobs = set()
    for start in sorted(jobs_adj):
        if start in visited_jobs:
            continue
        # parent pointers over the alternating DFS
        stack = [("j", start, None)]
        parent = {("j", start): None}
        while stack:
            kind, v, par = stack.pop()
            if kind == "j":
                visited_jobs.add(v)
                for s in jobs_adj[v]:
                    if ("s", s) == par:
                        continue
                    if ("s", s) in parent:
                        return _extract_cycle(parent, ("j", v), ("s", s))
                    parent[("s", s)] = ("j", v)
                    stack.append(("s", s, ("j", v)))
            else:
                for j in slots_adj[v]:
                    if ("j", j) == par:
                        continue
                    if ("j", j) in parent:
                        return _extract_cycle(parent, ("s", v), ("j", j))
                    parent[("j", j)] = ("s", v)
                    stack.append(("j", j, ("s", v)))
    return None


def _extract_cycle(parent: dict, tail, head):
    """Close the cycle formed by tree paths to ``tail`` and ``head``."""
    def path_to_root(v):
        out = [v]
        while parent[v] is not None:
            v = parent[v]
            out.append(v)
        return out

    pt, ph = path_to_root(tail), path_to_root(head)
    seen = set(pt)
    lca = next(v for v in ph if v in seen)
    a = pt[: pt.index(lca) + 1]
    b = ph[: ph.index(lca)]
    nodes = a + b[::-1] + [tail]  # closed walk tail ... lca ... head, tail
    edges = []
    for u, v in zip(nodes, nodes[1:]):
        j = u[1] if u[0] == "j" else v[1]
        s = u[1] if u[0] == "s" else v[1]
        edges.append((j, s))
    return edges


def integral_assignment(inst: Instance, xprime: np.ndarray, yprime: np.ndarray) -> Solution:
    """Assign every client to one facility in the support of its x' row.

    Per facility, the integral revenue load exceeds the fractional one by at
    most one client's revenue.
    """
    x = np.array(xprime, dtype=float)
    x[x < FEAS_EPS] = 0.0
    sums = x.sum(axis=1)
    if (sums <= 0).any():
        raise ModelError("a client carries no assignment mass")
    x /= sums[:, None]
    open_fs = np.where(np.asarray(yprime) > 0.5)[0]
    slot_facility, edges = _build_slots(inst, x, open_fs)
    chosen = _round_matching(inst.n_clients, len(slot_facility), edges)
    assign = tuple(slot_facility[s] for s in chosen)
    return Solution(open=frozenset(int(f) for f in open_fs), assign=assign)


# ---------------------------------------------------------------------------
# the composed pipeline
# ---------------------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    x: np.ndarray
    y: np.ndarray
    loss: np.ndarray
    dist: np.ndarray
    subsidy: float
    objective: float
    closeness: ClosenessBound | None  # certificate radii for this stage


@dataclass
class PipelineTrace:
    stages: list
    alpha: float
    theta: float
    delta: float
    relaxation_value: float
    fw_gap: float | None
    core: CoreDecomposition | None
    fractional: FractionalSolution | None = None  # warm start for nearby objectives

    def stage(self, name: str) -> StageRecord:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)


def _record(inst, spec, name, frac: FractionalSolution, closeness) -> StageRecord:
    return StageRecord(
        name=name,
        x=frac.x,
        y=frac.y,
        loss=frac.loss,
        dist=frac.dist,
        subsidy=frac.subsidy(inst),
        objective=evaluate_objective(spec, group_distances(inst, frac)),
        closeness=closeness,
    )


def solve_fsfl(
    inst: Instance,
    spec: ObjectiveSpec,
    settings: SolverSettings | None = None,
    warm: FractionalSolution | None = None,
):
    """Full pipeline: relax, alpha-point round, open integral facilities,
    round assignments.  Returns (Solution, PipelineTrace)."""
    settings = settings or SolverSettings()
    theta = theta_of(inst)
    frac, info = solve_relaxation(inst, spec, settings, return_info=True, warm=warm)
    stages = [_record(inst, spec, "relaxation", frac, None)]

    xbar, bound = alpha_point_rounding(inst, frac)
    stages.append(_record(inst, spec, "alpha_rounding", xbar, bound))

    xp, bound5, graph, core = round_to_integral_facilities(inst, xbar.x, xbar.y, bound)
    stages.append(_record(inst, spec, "integral_facilities", xp, bound5))

    sol = integral_assignment(inst, xp.x, xp.y)
    d = sol.distances(inst)
    final = FractionalSolution.from_xy(
        inst, _solution_matrix(inst, sol), _solution_y(inst, sol)
    )
    stages.append(_record(inst, spec, "integral_assignment", final, bound5))

    trace = PipelineTrace(
        stages=stages,
        alpha=rounding_alpha(inst.delta),
        theta=theta,
        delta=inst.delta,
        relaxation_value=info.value,
        fw_gap=info.fw_gap,
        core=core,
        fractional=frac,
    )
    return sol, trace


def _solution_matrix(inst: Instance, sol: Solution) -> np.ndarray:
    x = np.zeros((inst.n_clients, inst.n_facilities))
    x[np.arange(inst.n_clients), np.array(sol.assign)] = 1.0
    return x


def _solution_y(inst: Instance, sol: Solution) -> np.ndarray:
    y = np.zeros(inst.n_facilities)
    y[sorted(sol.open)] = 1.0
    return y


def reduce_budgeted_to_fsfl(
    clients,
    facilities,
    costs,
    metric: Metric,
    budget: float,
    groups: np.ndarray | None = None,
):
    """Budget-constrained placement as a subsidized instance.

    Costs (and the budget) are scaled so the cheapest facility costs one;
    every client earns 1/|C| and delta = scaled budget - 1.  Feasible sets of
    the two problems coincide and objectives are untouched.  Returns
    (instance, scale_factor).
    """
    costs = np.asarray(costs, dtype=float)
    if (costs <= 0).any():
        raise ModelError("budgeted reduction needs positive costs")
    scale = float(costs.min())
    if budget < scale:
        raise ModelError("budget below the cheapest facility")
    scaled_budget = budget / scale
    n = len(clients)
    inst = Instance(
        client_ids=tuple(clients),
        revenues=np.full(n, 1.0 / n),
        facility_ids=tuple(facilities),
        costs=costs / scale,
        pre_opened=np.zeros(len(facilities), dtype=bool),
        metric=metric,
        groups=np.ones((n, 1)) if groups is None else groups,
        delta=scaled_budget - 1.0,
        count_all_losses=True,
    )
    return inst, scale
