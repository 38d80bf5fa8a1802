"""Exact oracles on tiny instances: exhaustive optima, feasibility checks,
and portfolio-necessity analysis.

The workhorse is ``feasible_frontier``: enumerate every assignment (facility
set = assigned facilities plus pre-opened ones, which is never worse), keep
the subsidy-feasible ones, and reduce their group-distance vectors to the
Pareto-minimal set.  Every monotone objective (conic, L_p, top-l) attains its
feasible optimum on that frontier, so oracle calls become array scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    Conic,
    Instance,
    Lp,
    ModelError,
    ObjectiveSpec,
    Solution,
    TopL,
    evaluate_objective_rows,
    subsidy_of,
)

_CHUNK = 200_000


@dataclass(frozen=True)
class EnumLimits:
    max_facilities: int = 12
    max_assignment_states: int = 2_000_000

    def __post_init__(self):
        if self.max_facilities <= 0 or self.max_assignment_states <= 0:
            raise ModelError("enumeration limits must be positive")


class LimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Frontier:
    """Pareto-minimal feasible group-distance vectors with witness assignments."""

    H: np.ndarray  # (k, t)
    assignments: np.ndarray  # (k, n_clients) facility indices
    feasible_count: int
    total_states: int

    @property
    def empty(self) -> bool:
        return len(self.H) == 0


def _decode(codes: np.ndarray, n: int, m: int) -> np.ndarray:
    out = np.empty((len(codes), n), dtype=np.int64)
    c = codes.copy()
    for j in range(n):
        out[:, j] = c % m
        c //= m
    return out


def pareto_min_rows(H: np.ndarray) -> np.ndarray:
    """Indices of Pareto-minimal rows (one representative per duplicate)."""
    if len(H) == 0:
        return np.zeros(0, dtype=int)
    alive = np.ones(len(H), dtype=bool)
    sums = H.sum(axis=1)
    order = np.argsort(sums, kind="stable")
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(i)
        dominated = (H >= H[i] - 1e-12).all(axis=1)
        alive &= ~dominated
    return np.array(sorted(keep), dtype=int)


def _subsets_with_pre(inst: Instance):
    m = inst.n_facilities
    pre_mask = 0
    for f in np.where(inst.pre_opened)[0]:
        pre_mask |= 1 << int(f)
    for mask in range(1, 2**m):
        if mask & pre_mask == pre_mask:
            yield [f for f in range(m) if (mask >> f) & 1]


def feasible_frontier(inst: Instance, limits: EnumLimits | None = None) -> Frontier:
    """Enumerate facility subsets (pre-opened forced in); per subset, assign
    zero-revenue clients to their nearest open facility (no feasibility
    coupling, and nearer coordinate-wise dominates for every monotone
    objective) and enumerate the positive-revenue clients exhaustively."""
    limits = limits or EnumLimits()
    n, m = inst.n_clients, inst.n_facilities
    if m > limits.max_facilities:
        raise LimitExceeded(f"{m} facilities exceed the enumeration limit")
    rev_clients = np.where(inst.revenues > 0)[0]
    zero_clients = np.where(inst.revenues <= 0)[0]
    r = inst.revenues[rev_clients]
    counted = inst.counted()
    budget = inst.delta * inst.total_revenue
    tol = 1e-12 * max(1.0, budget)

    H_parts, A_parts = [], []
    feasible = 0
    total = 0
    for fs in _subsets_with_pre(inst):
        k = len(fs)
        states = k ** len(rev_clients)
        if states > limits.max_assignment_states:
            raise LimitExceeded(f"{states} assignment states exceed the enumeration limit")
        total += states
        fs_arr = np.array(fs, dtype=np.int64)
        base_assign = np.zeros(n, dtype=np.int64)
        base_h = np.zeros(inst.n_groups)
        if len(zero_clients):
            nearest = fs_arr[np.argmin(inst.dist_cf[np.ix_(zero_clients, fs)], axis=1)]
            base_assign[zero_clients] = nearest
            d0 = inst.dist_cf[zero_clients, nearest]
            base_h = d0 @ inst.groups[zero_clients]
        base_loss = float(sum(inst.costs[f] for f in fs if counted[f]))
        for start in range(0, states, _CHUNK):
            codes = np.arange(start, min(start + _CHUNK, states), dtype=np.int64)
            A = fs_arr[_decode(codes, len(rev_clients), k)]
            loss = np.full(len(codes), base_loss)
            for f in fs:
                if not counted[f]:
                    continue
                revf = (A == f) @ r
                loss -= np.minimum(revf, inst.costs[f])  # cap at cost: profit is free
            ok = loss <= budget + tol
            feasible += int(ok.sum())
            if not ok.any():
                continue
            A = A[ok]
            if len(rev_clients):
                D = inst.dist_cf[rev_clients[None, :], A]
                H = base_h[None, :] + D @ inst.groups[rev_clients]
            else:
                H = np.tile(base_h, (len(A), 1))
            keep = pareto_min_rows(H)
            full = np.tile(base_assign, (len(keep), 1))
            full[:, rev_clients] = A[keep]
            H_parts.append(H[keep])
            A_parts.append(full)
    if not H_parts:
        return Frontier(
            H=np.zeros((0, inst.n_groups)),
            assignments=np.zeros((0, n), dtype=np.int64),
            feasible_count=0,
            total_states=total,
        )
    H = np.concatenate(H_parts)
    A = np.concatenate(A_parts)
    keep = pareto_min_rows(H)
    return Frontier(H=H[keep], assignments=A[keep], feasible_count=feasible, total_states=total)


_frontier_cache: dict = {}


def cached_frontier(inst: Instance, limits: EnumLimits | None = None) -> Frontier:
    # the held instance reference keeps id() from being recycled
    key = (id(inst), limits)
    got = _frontier_cache.get(key)
    if got is None or got[0] is not inst:
        got = (inst, feasible_frontier(inst, limits))
        _frontier_cache[key] = got
    return got[1]


@dataclass(frozen=True)
class ExactResult:
    solution: Solution | None
    objective: float
    certified: bool
    feasible: bool


def _solution_from_assignment(inst: Instance, assign: np.ndarray) -> Solution:
    open_set = set(int(f) for f in np.unique(assign))
    open_set |= set(int(f) for f in np.where(inst.pre_opened)[0])
    return Solution(open=frozenset(open_set), assign=tuple(int(a) for a in assign))


def exact_fsfl(
    inst: Instance,
    spec: ObjectiveSpec,
    limits: EnumLimits | None = None,
    use_cache: bool = False,
) -> ExactResult:
    """Exhaustive optimum of the delta-subsidized problem.

    Falls back to nearest-assignment plus feasible local search when the state
    space exceeds the limits; the result is then not certified exact.
    """
    limits = limits or EnumLimits()
    try:
        frontier = cached_frontier(inst, limits) if use_cache else feasible_frontier(inst, limits)
    except LimitExceeded:
        return _heuristic_fsfl(inst, spec, limits)
    if frontier.empty:
        return ExactResult(None, math.inf, certified=True, feasible=False)
    vals = evaluate_objective_rows(spec, frontier.H)
    i = int(np.argmin(vals))
    sol = _solution_from_assignment(inst, frontier.assignments[i])
    return ExactResult(sol, float(vals[i]), certified=True, feasible=True)


def _is_separable(spec: ObjectiveSpec) -> bool:
    return isinstance(spec, Conic) or (isinstance(spec, Lp) and spec.p == 1.0)


def _heuristic_fsfl(inst: Instance, spec: ObjectiveSpec, limits: EnumLimits) -> ExactResult:
    """Per-subset nearest assignment refined by subsidy-feasible swaps."""
    n, m = inst.n_clients, inst.n_facilities
    if m > 22:
        raise LimitExceeded("facility subsets not enumerable")
    pre = np.where(inst.pre_opened)[0]
    best: tuple | None = None
    certified = True
    for mask in range(1, 2**m):
        fs = [f for f in range(m) if (mask >> f) & 1]
        if any(int(f) not in fs for f in pre):
            continue
        sub_certified, cand = _best_for_subset(inst, spec, np.array(fs))
        certified &= sub_certified
        if cand is not None and (best is None or cand[1] < best[1]):
            best = cand
    if best is None:
        return ExactResult(None, math.inf, certified=certified, feasible=False)
    sol, val = best
    return ExactResult(sol, val, certified=certified and _is_separable(spec), feasible=True)


def _best_for_subset(inst: Instance, spec: ObjectiveSpec, fs: np.ndarray):
    from .model import group_distances, evaluate_objective

    order = np.argsort(inst.dist_cf[:, fs], axis=1)
    assign = fs[order[:, 0]]

    def mk(a):
        return Solution(open=frozenset(int(f) for f in fs), assign=tuple(int(v) for v in a))

    def subsid(a):
        return subsidy_of(inst, mk(a))

    a = assign.copy()
    nearest_ok = subsid(a) <= inst.delta + 1e-12
    if not nearest_ok:
        improved = True
        while improved and subsid(a) > inst.delta + 1e-12:
            improved = False
            for j in range(inst.n_clients):
                base = subsid(a)
                for f in fs:
                    if f == a[j]:
                        continue
                    trial = a.copy()
                    trial[j] = f
                    if subsid(trial) < base - 1e-15:
                        a = trial
                        improved = True
                        break
                if improved:
                    break
    if subsid(a) > inst.delta + 1e-12:
        return False, None  # could not certify feasibility for this subset
    sol = mk(a)
    val = evaluate_objective(spec, group_distances(inst, sol))
    return nearest_ok, (sol, val)


def check_subsidy_feasible(
    inst: Instance,
    target,
    delta: float | None = None,
    limits: EnumLimits | None = None,
):
    """Exact delta-subsidy verdict.

    ``target`` is either a full Solution (trivial check) or a facility set;
    for the latter, assignments of the positive-revenue clients are enumerated
    exhaustively.  Returns True/False, or None when limits are exceeded.
    """
    limits = limits or EnumLimits()
    d = inst.delta if delta is None else delta
    if isinstance(target, Solution):
        return subsidy_of(inst, target) <= d + 1e-12
    fs = sorted(int(f) for f in target)
    if not fs:
        return inst.n_clients == 0
    rev_clients = np.where(inst.revenues > 0)[0]
    k = len(fs)
    states = k ** len(rev_clients)
    if states > limits.max_assignment_states:
        return None
    counted = inst.counted()
    base = sum(
        float(inst.costs[f]) for f in fs if counted[f]
    )  # loss before revenue offsets
    budget = d * inst.total_revenue + 1e-12 * max(1.0, d * inst.total_revenue)
    if base <= budget:
        return True
    r = inst.revenues[rev_clients]
    for start in range(0, states, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, states), dtype=np.int64)
        A = _decode(codes, len(rev_clients), k)
        loss = np.zeros(len(codes))
        for fi, f in enumerate(fs):
            if not counted[f]:
                continue
            revt = (A == fi) @ r
            loss += np.maximum(0.0, inst.costs[f] - revt)
        if (loss <= budget).any():
            return True
    return False


# ---------------------------------------------------------------------------
# portfolio necessity over explicit point sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConicGridFamily:
    """All 0/1 subset weight vectors chi_S, S nonempty."""

    N: int

    def members(self):
        for mask in range(1, 2**self.N):
            lam = np.array([(mask >> i) & 1 for i in range(self.N)], dtype=float)
            yield f"S={mask:b}", Conic(lam)


@dataclass(frozen=True)
class LpGridFamily:
    ps: tuple

    def members(self):
        for p in self.ps:
            yield f"p={p}", Lp(float(p))


@dataclass(frozen=True)
class TopLGridFamily:
    N: int

    def members(self):
        for ell in range(1, self.N + 1):
            yield f"l={ell}", TopL(ell)


def portfolio_necessity(points: np.ndarray, family, alpha: float):
    """Points that are uniquely alpha-approximate for some family member.

    Every alpha-approximate portfolio over this point set must contain each
    returned point.  Also returns {member label: alpha-approximate indices}.
    """
    P = np.asarray(points, dtype=float)
    necessary = set()
    detail = {}
    for label, spec in family.members():
        vals = evaluate_objective_rows(spec, P)
        opt = float(vals.min())
        ok = np.where(vals <= alpha * opt * (1 + 1e-12) + 1e-15)[0]
        detail[label] = ok
        if len(ok) == 1:
            necessary.add(int(ok[0]))
    return sorted(necessary), detail
