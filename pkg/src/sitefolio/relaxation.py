"""Convex relaxation of the placement program.

The polytope (shared by every objective) is

    sum_f x_jf = 1                    for every client j
    x_jf <= y_f                       for every client j, facility f
    l_f >= c_f y_f - sum_j r_j x_jf   for every facility f
    sum_{f counted} l_f <= delta * total revenue
    0 <= x, 0 <= y <= 1 (y fixed to 1 for pre-opened), l >= 0

Linear / epigraph-representable objectives (conic combinations, L1, Linf,
top-l) are solved as a single LP.  Finite p > 1 runs conditional gradient:
linearize the norm at the current distances, call the LP oracle over the same
polytope, take an exact line search on the 1-D restriction, and stop at the
requested relative Frank-Wolfe gap.

Engine selection: small problems use the package's dense simplex with basis
warm starts; large ones use HiGHS.  On the HiGHS path one master LP per
instance carries the polytope plus zero-cost epigraph auxiliaries for every
objective shape, so consecutive solves (portfolio probes, Frank-Wolfe
iterations) only change objective costs and reuse the basis.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import lp as lplib
from .model import (
    Conic,
    FractionalSolution,
    Instance,
    Lp,
    ModelError,
    ObjectiveSpec,
    TopL,
)


class InstanceInfeasibleError(RuntimeError):
    """The relaxation polytope is empty (delta too small for any fractional plan)."""


@dataclass
class Relaxation:
    """An LP (or the polytope of a convex program) plus variable index maps."""

    prob: lplib.LpProblem
    x_idx: np.ndarray  # (n, m)
    y_idx: np.ndarray  # (m,)
    l_idx: np.ndarray  # (m,)
    inst: Instance
    spec: ObjectiveSpec
    needs_fw: bool

    def split(self, v: np.ndarray):
        return v[self.x_idx], v[self.y_idx]


@dataclass
class RelaxationInfo:
    value: float
    fw_gap: float | None = None
    iterations: int = 0
    objective_trace: tuple = ()


def _add_polytope(prob: lplib.LpProblem, inst: Instance):
    n, m = inst.n_clients, inst.n_facilities
    x_idx = prob.add_vars(n * m, "x").reshape(n, m)
    y_idx = prob.add_vars(m, "y", ub=1.0)
    l_idx = prob.add_vars(m, "l")
    for f in np.where(inst.pre_opened)[0]:
        prob.lb[int(y_idx[f])] = 1.0
    for j in range(n):
        prob.add_row(x_idx[j], np.ones(m), "=", 1.0)
    for j in range(n):
        for f in range(m):
            prob.add_row([x_idx[j, f], y_idx[f]], [1.0, -1.0], "<=", 0.0)
    for f in range(m):
        idx = np.concatenate([[y_idx[f]], x_idx[:, f], [l_idx[f]]])
        coef = np.concatenate([[inst.costs[f]], -inst.revenues, [-1.0]])
        prob.add_row(idx, coef, "<=", 0.0)
    counted = np.where(inst.counted())[0]
    if len(counted):
        prob.add_row(
            l_idx[counted], np.ones(len(counted)), "<=", inst.delta * inst.total_revenue
        )
    return x_idx, y_idx, l_idx


def build_relaxation(inst: Instance, spec: ObjectiveSpec) -> Relaxation:
    prob = lplib.LpProblem()
    x_idx, y_idx, l_idx = _add_polytope(prob, inst)
    needs_fw = False
    if isinstance(spec, Conic):
        if len(spec.lam) != inst.n_groups:
            raise ModelError("conic weight length does not match group count")
        w = inst.groups @ spec.lam
        prob.set_cost(x_idx.ravel(), (w[:, None] * inst.dist_cf).ravel())
    elif isinstance(spec, Lp) and spec.p == 1.0:
        w = inst.groups.sum(axis=1)
        prob.set_cost(x_idx.ravel(), (w[:, None] * inst.dist_cf).ravel())
    elif isinstance(spec, Lp) and spec.is_max:
        z = prob.add_var("z", cost=1.0)
        for s in range(inst.n_groups):
            coef = (inst.groups[:, s][:, None] * inst.dist_cf).ravel()
            prob.add_row(
                np.concatenate([x_idx.ravel(), [z]]),
                np.concatenate([coef, [-1.0]]),
                "<=",
                0.0,
            )
    elif isinstance(spec, TopL):
        t = inst.n_groups
        if spec.ell > t:
            raise ModelError("ell exceeds the number of groups")
        u = prob.add_var("u", cost=float(spec.ell))
        v_idx = prob.add_vars(t, "v", cost=1.0)
        for s in range(t):
            coef = (inst.groups[:, s][:, None] * inst.dist_cf).ravel()
            prob.add_row(
                np.concatenate([x_idx.ravel(), [u, v_idx[s]]]),
                np.concatenate([coef, [-1.0, -1.0]]),
                "<=",
                0.0,
            )
    elif isinstance(spec, Lp):
        needs_fw = True  # finite p > 1: conditional gradient over the polytope
    else:
        raise ModelError(f"unknown objective {spec!r}")
    return Relaxation(prob, x_idx, y_idx, l_idx, inst, spec, needs_fw)


# ---------------------------------------------------------------------------
# master LP shared across objectives (large-scale path)
# ---------------------------------------------------------------------------


class MasterLP:
    """The polytope plus zero-cost epigraph auxiliaries for every objective
    shape; consecutive solves only change costs.  Backed by the HiGHS object
    API when available (basis reuse), scipy.linprog otherwise."""

    def __init__(self, inst: Instance):
        self._lock = threading.Lock()
        self.inst = inst
        prob = lplib.LpProblem()
        self.x_idx, self.y_idx, self.l_idx = _add_polytope(prob, inst)
        t = inst.n_groups
        self.z_idx = prob.add_var("z")
        self.u_idx = prob.add_var("u")
        self.v_idx = prob.add_vars(t, "v")
        for s in range(t):
            coef = (inst.groups[:, s][:, None] * inst.dist_cf).ravel()
            prob.add_row(
                np.concatenate([self.x_idx.ravel(), [self.z_idx]]),
                np.concatenate([coef, [-1.0]]),
                "<=",
                0.0,
            )
            prob.add_row(
                np.concatenate([self.x_idx.ravel(), [self.u_idx, self.v_idx[s]]]),
                np.concatenate([coef, [-1.0, -1.0]]),
                "<=",
                0.0,
            )
        self.prob = prob
        self._h = None
        self._matrices = None
        try:
            self._init_highs()
        except Exception:
            self._h = None

    def _init_highs(self):
        import scipy.sparse as sp
        from scipy.optimize._highspy import _core as hc

        A_ub, b_ub, A_eq, b_eq = self.prob.matrices()
        blocks = [m for m in (A_ub, A_eq) if m is not None]
        A = sp.vstack(blocks, format="csc")
        lo, up = [], []
        if A_ub is not None:
            lo.append(np.full(A_ub.shape[0], -np.inf))
            up.append(b_ub)
        if A_eq is not None:
            lo.append(b_eq)
            up.append(b_eq)
        lp = hc.HighsLp()
        lp.num_col_ = self.prob.n
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = np.zeros(self.prob.n)
        lp.col_lower_ = np.array(self.prob.lb)
        lp.col_upper_ = np.array(self.prob.ub)
        lp.row_lower_ = np.concatenate(lo)
        lp.row_upper_ = np.concatenate(up)
        lp.a_matrix_.format_ = hc.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data
        h = hc._Highs()
        h.setOptionValue("output_flag", False)
        h.passModel(lp)
        self._hc = hc
        self._h = h
        self._col_idx = np.arange(self.prob.n, dtype=np.int32)
        self._bases: dict = {}

    def solve(self, costs: np.ndarray, shape: str = "default") -> lplib.LpResult:
        """``shape`` keys a warm-start basis lineage: re-solves within one
        objective shape reuse its basis; a new shape starts clean (a stale
        basis after a large cost switch can be far slower than cold).

        Serialized: the native solver state is shared by every solve against
        this instance, so concurrent workers take turns."""
        costs = np.asarray(costs, dtype=float)
        with self._lock:
            return self._solve_locked(costs, shape)

    def _solve_locked(self, costs: np.ndarray, shape: str) -> lplib.LpResult:
        if self._h is not None:
            hc = self._hc
            self._h.changeColsCost(self.prob.n, self._col_idx, costs)
            prior = self._bases.get(shape)
            if prior is not None:
                self._h.setBasis(prior)
            else:
                self._h.clearSolver()
            self._h.run()
            status = self._h.getModelStatus()
            if status == hc.HighsModelStatus.kOptimal:
                self._bases[shape] = self._h.getBasis()
                x = np.array(self._h.getSolution().col_value)
                return lplib.LpResult(lplib.OPTIMAL, x, float(self._h.getObjectiveValue()))
            if status == hc.HighsModelStatus.kInfeasible:
                return lplib.LpResult(lplib.INFEASIBLE, None, None)
            raise ModelError(f"HiGHS ended with status {status}")
        return lplib.solve_lp_highs(self.prob, costs)

    def costs_for(self, spec: ObjectiveSpec) -> np.ndarray:
        inst = self.inst
        c = np.zeros(self.prob.n)
        if isinstance(spec, Conic):
            w = inst.groups @ spec.lam
            c[self.x_idx] = w[:, None] * inst.dist_cf
        elif isinstance(spec, Lp) and spec.p == 1.0:
            w = inst.groups.sum(axis=1)
            c[self.x_idx] = w[:, None] * inst.dist_cf
        elif isinstance(spec, Lp) and spec.is_max:
            c[self.z_idx] = 1.0
        elif isinstance(spec, TopL):
            c[self.u_idx] = float(spec.ell)
            c[self.v_idx] = 1.0
        else:
            raise ModelError("master costs need an LP-representable objective")
        return c


_master_cache: list = []  # [(instance, MasterLP)], tiny LRU keyed by identity
_master_cache_lock = threading.Lock()


def master_for(inst: Instance) -> MasterLP:
    with _master_cache_lock:
        for k, (i, m) in enumerate(_master_cache):
            if i is inst:
                _master_cache.append(_master_cache.pop(k))
                return m
    m = MasterLP(inst)
    with _master_cache_lock:
        _master_cache.append((inst, m))
        if len(_master_cache) > 3:
            _master_cache.pop(0)
    return m


def _pick_engine(inst: Instance, settings: lplib.SolverSettings) -> str:
    if settings.lp_engine != "auto":
        return settings.lp_engine
    # the dense engine pays O(rows^3) per factorization; x <= y dominates rows
    rows = inst.n_clients * inst.n_facilities + inst.n_clients + 2 * inst.n_facilities
    return "simplex" if rows <= 450 else "highs"


class _PolytopeOracle:
    """min c.v over the relaxation polytope, per chosen engine."""

    def __init__(self, inst: Instance, spec: ObjectiveSpec, settings: lplib.SolverSettings):
        self.engine = _pick_engine(inst, settings)
        if self.engine == "simplex":
            self.rel = build_relaxation(inst, spec)
            self.poly = lplib.SimplexPolytope(self.rel.prob)
            self.basis = None
            self.master = None
        elif self.engine == "highs":
            self.master = master_for(inst)
            self.rel = Relaxation(
                self.master.prob,
                self.master.x_idx,
                self.master.y_idx,
                self.master.l_idx,
                inst,
                spec,
                needs_fw=isinstance(spec, Lp) and not spec.is_max and spec.p > 1.0,
            )
        else:
            raise ModelError(f"unknown LP engine {self.engine!r}")

    def default_costs(self) -> np.ndarray:
        if self.master is not None:
            return self.master.costs_for(self.rel.spec)
        return np.array(self.rel.prob.c)

    def solve(self, c: np.ndarray, shape: str = "default") -> lplib.LpResult:
        if self.master is not None:
            return self.master.solve(c, shape=shape)
        res, basis = self.poly.solve(c, basis0=self.basis)
        if basis is not None:
            self.basis = basis
        return res


def _norm_and_grad(h: np.ndarray, p: float):
    """(value, d value / d h) for the p-norm, max-factored for stability.

    Uses the 0-extension subgradient at coordinates where h == 0.
    """
    hmax = float(h.max(initial=0.0))
    if hmax <= 0.0:
        return 0.0, np.zeros_like(h)
    r = h / hmax
    val = hmax * float((r**p).sum() ** (1.0 / p))
    grad = (h / val) ** (p - 1.0)
    return val, grad


def solve_relaxation(
    inst: Instance,
    spec: ObjectiveSpec,
    settings: lplib.SolverSettings | None = None,
    return_info: bool = False,
    warm: FractionalSolution | None = None,
    force_fw: bool = False,
):
    """Optimal fractional solution of the relaxed program.

    For finite p > 1 this runs conditional gradient; ``warm`` may supply a
    feasible starting point (e.g. the previous solve for a nearby p).
    ``force_fw`` runs the conditional-gradient path even for p = 1 (its
    linearization is exact there), used by the solver cross-checks.
    """
    settings = settings or lplib.SolverSettings()
    spec_eff = spec
    if (
        isinstance(spec, Lp)
        and not spec.is_max
        and spec.p >= settings.pnorm_epigraph_threshold
    ):
        spec_eff = Lp(math.inf)  # large-p epigraph routing (performance switch)
    oracle = _PolytopeOracle(inst, spec_eff, settings)
    rel = oracle.rel
    if force_fw and isinstance(spec_eff, Lp) and not spec_eff.is_max:
        rel.needs_fw = True

    if not rel.needs_fw:
        shape = "topl" if isinstance(spec_eff, TopL) else (
            "maxnorm" if isinstance(spec_eff, Lp) and spec_eff.is_max else "linear"
        )
        res = oracle.solve(oracle.default_costs(), shape=shape)
        if res.status == lplib.INFEASIBLE:
            raise InstanceInfeasibleError("relaxation polytope is empty")
        if res.status != lplib.OPTIMAL:
            raise ModelError(f"relaxation LP ended with status {res.status}")
        x, y = rel.split(res.x)
        frac = FractionalSolution.from_xy(inst, x, y)
        if return_info:
            from .model import evaluate_objective, group_distances

            value = evaluate_objective(spec, group_distances(inst, frac))
            return frac, RelaxationInfo(value=value)
        return frac

    p = spec_eff.p
    mu = inst.groups
    dist = inst.dist_cf

    def obj_of(v):
        x = v[rel.x_idx]
        d = (x * dist).sum(axis=1)
        return d, d @ mu

    if warm is not None:
        v = np.zeros(rel.prob.n)
        v[rel.x_idx] = warm.x
        v[rel.y_idx] = warm.y
        v[rel.l_idx] = np.maximum(0.0, inst.costs * warm.y - inst.revenues @ warm.x)
    else:
        c0 = np.zeros(rel.prob.n)
        c0[rel.x_idx] = mu.sum(axis=1)[:, None] * dist
        res = oracle.solve(c0, shape="linear")
        if res.status == lplib.INFEASIBLE:
            raise InstanceInfeasibleError("relaxation polytope is empty")
        v = res.x

    trace = []
    gap_rel = math.inf
    iters = 0
    for iters in range(1, settings.max_iterations + 1):
        d, h = obj_of(v)
        val, gh = _norm_and_grad(h, p)
        trace.append(val)
        if val <= 0.0:
            gap_rel = 0.0
            break
        grad_d = mu @ gh
        c = np.zeros(rel.prob.n)
        c[rel.x_idx] = grad_d[:, None] * dist
        res = oracle.solve(c, shape="linear")
        if res.status == lplib.INFEASIBLE:
            raise InstanceInfeasibleError("relaxation polytope is empty")
        s = res.x
        gap = float(c @ (v - s))
        gap_rel = gap / max(abs(val), 1e-300)
        if gap_rel <= settings.fw_gap:
            break
        _, h_s = obj_of(s)
        dh = h_s - h

        def phi(g):
            return _norm_and_grad(np.maximum(h + g * dh, 0.0), p)[0]

        r = minimize_scalar(phi, bounds=(0.0, 1.0), method="bounded",
                            options={"xatol": 1e-12})
        gamma = min((float(r.x), 1.0), key=phi)
        if gamma <= 0.0 or phi(gamma) >= val:
            break
        v = v + gamma * (s - v)

    x, y = rel.split(v)
    frac = FractionalSolution.from_xy(inst, x, y)
    if return_info:
        d, h = obj_of(v)
        val = _norm_and_grad(h, spec.p)[0] if isinstance(spec, Lp) and not spec.is_max else None
        if val is None:
            from .model import evaluate_objective, group_distances

            val = evaluate_objective(spec, group_distances(inst, frac))
        return frac, RelaxationInfo(
            value=val, fw_gap=gap_rel, iterations=iters, objective_trace=tuple(trace)
        )
    return frac
