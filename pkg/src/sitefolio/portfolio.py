"""Portfolio construction over approximation oracles.

Two constructions:

* conic combinations: a multiplicative mesh over the rescaled weight
  hypercubes, one oracle call per cell,
* monotone interpolating classes (L_p, top-l, ...): stepping that finds the
  next parameter whose achievable value drops by (1 + epsilon), via bisection
  over a memoized monotone wrapper of the oracle.

Oracles return ``(solution, h)`` where ``h`` is the base-objective vector of
the solution; everything here is generic over the solution object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError

# ---------------------------------------------------------------------------
# conic combinations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConicClassSpec:
    N: int
    u: float  # imbalance: max over x, i, j of h_i(x) / h_j(x)
    epsilon: float
    beta: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ModelError("N must be at least 1")
        if self.u < 1.0:
            raise ModelError("imbalance u must be >= 1")
        if not (0.0 < self.epsilon <= 1.0):
            raise ModelError("epsilon must lie in (0, 1]")
        if self.beta < 1.0:
            raise ModelError("beta must be >= 1")

    @property
    def delta_mesh(self) -> float:
        return self.epsilon / (4.0 * self.u * self.N)

    @property
    def thresholds_per_dim(self) -> int:
        if self.N == 1:
            return 1
        step = math.log1p(self.epsilon / 4.0)
        return math.ceil(math.log(1.0 / self.delta_mesh) / step)

    def size_bound(self) -> float:
        if self.N == 1:
            return 1.0
        inner = 12.0 * math.log(4.0 * self.N * self.u / self.epsilon) / self.epsilon
        return self.N * math.ceil(inner) ** (self.N - 1)


@dataclass(frozen=True)
class MeshCell:
    """One hyper-rectangle of the mesh on the hypercube with coordinate
    ``i`` pinned to 1; ``exponents[j]`` locates the cell's lower threshold."""

    i: int
    exponents: tuple
    lam: tuple  # representative weight vector (the lower cell corner)

    def weights(self) -> np.ndarray:
        return np.array(self.lam)


def build_conic_mesh(spec: ConicClassSpec, max_cells: int = 5_000_000) -> list:
    if spec.N == 1:
        return [MeshCell(0, (), (1.0,))]
    T = spec.thresholds_per_dim
    total = spec.N * T ** (spec.N - 1)
    if total > max_cells:
        raise ModelError(f"mesh would need {total} cells")
    delta = spec.delta_mesh
    ratio = 1.0 + spec.epsilon / 4.0
    cells = []
    others = lambda i: [j for j in range(spec.N) if j != i]
    for i in range(spec.N):
        idx = np.zeros(spec.N - 1, dtype=int)
        while True:
            lam = np.ones(spec.N)
            exps = [0] * spec.N
            for pos, j in enumerate(others(i)):
                exps[j] = int(idx[pos])
                lam[j] = min(1.0, delta * ratio ** idx[pos])
            cells.append(MeshCell(i, tuple(exps), tuple(lam)))
            pos = 0
            while pos < spec.N - 1:
                idx[pos] += 1
                if idx[pos] < T:
                    break
                idx[pos] = 0
                pos += 1
            else:
                break
    return cells


def snap_to_cell(mu, spec: ConicClassSpec) -> MeshCell:
    """Map an arbitrary nonnegative weight vector to its mesh cell."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or len(mu) != spec.N:
        raise ModelError("weight vector has the wrong length")
    if (mu < 0).any() or not mu.any():
        raise ModelError("weights must be nonnegative and not all zero")
    i = int(np.argmax(mu))  # ties: lowest index
    lam = mu / mu[i]
    if spec.N == 1:
        return MeshCell(0, (), (1.0,))
    delta = spec.delta_mesh
    ratio = 1.0 + spec.epsilon / 4.0
    T = spec.thresholds_per_dim
    exps = [0] * spec.N
    rep = np.ones(spec.N)
    for j in range(spec.N):
        if j == i:
            continue
        v = max(lam[j], delta)
        k = int(math.floor(math.log(v / delta) / math.log(ratio) + 1e-12))
        k = min(max(k, 0), T - 1)
        exps[j] = k
        rep[j] = min(1.0, delta * ratio**k)
    return MeshCell(i, tuple(exps), tuple(rep))


@dataclass
class PortfolioEntry:
    index: object  # weight vector, p value, ell, or a custom parameter
    label: str
    solution: object
    h: np.ndarray
    value: float
    meta: dict = field(default_factory=dict)


@dataclass
class Portfolio:
    entries: list
    certificate: dict
    oracle_calls: int
    cell_map: dict | None = None  # conic portfolios: (i, exponents) -> entry idx

    def __post_init__(self):
        if not self.entries:
            raise ModelError("portfolio must be non-empty")

    def entry_for_cell(self, cell: MeshCell) -> PortfolioEntry:
        return self.entries[self.cell_map[(cell.i, cell.exponents)]]

    def entry_for_weights(self, mu, spec: ConicClassSpec) -> PortfolioEntry:
        return self.entry_for_cell(snap_to_cell(mu, spec))


def build_conic_portfolio(oracle, spec: ConicClassSpec) -> Portfolio:
    """One oracle call per mesh cell at its representative weights.

    Solutions with identical base-objective vectors are stored once; the cell
    map keeps every cell pointing at its entry, so deduplication cannot change
    coverage.
    """
    cells = build_conic_mesh(spec)
    entries: list = []
    seen: dict = {}
    cell_map = {}
    calls = 0
    for cell in cells:
        lam = cell.weights()
        try:
            sol, h = oracle(lam)
        except Exception as e:
            raise RuntimeError(
                f"oracle failed at mesh cell i={cell.i}, exponents={cell.exponents}, "
                f"weights={list(cell.lam)}"
            ) from e
        calls += 1
        h = np.asarray(h, dtype=float)
        key = h.tobytes()
        if key not in seen:
            seen[key] = len(entries)
            entries.append(
                PortfolioEntry(
                    index=lam,
                    label="l=" + ",".join(f"{v:.4g}" for v in lam),
                    solution=sol,
                    h=h,
                    value=float(lam @ h),
                )
            )
        cell_map[(cell.i, cell.exponents)] = seen[key]
    return Portfolio(
        entries=entries,
        certificate={
            "alpha": spec.beta * (1.0 + spec.epsilon),
            "beta": spec.beta,
            "epsilon": spec.epsilon,
            "u": spec.u,
            "mesh_cells": len(cells),
            "size_bound": spec.size_bound(),
        },
        oracle_calls=calls,
        cell_map=cell_map,
    )


def estimate_imbalance(H: np.ndarray, safety: float = 2.0) -> float:
    """Sampling-based imbalance estimate (max ratio over rows, times safety)."""
    H = np.asarray(H, dtype=float)
    if (H <= 0).any():
        raise ModelError("imbalance needs strictly positive base objectives")
    return float((H.max(axis=1) / H.min(axis=1)).max()) * safety


def check_balance(H: np.ndarray, u: float) -> bool:
    """Validation probe for a user-supplied imbalance bound."""
    H = np.asarray(H, dtype=float)
    if (H <= 0).any():
        return False
    return bool((H.max(axis=1) <= u * H.min(axis=1) + 1e-12).all())


def exp_family_grid(theta: float, epsilon: float) -> np.ndarray:
    """Reference portfolio for h_i(x) = exp(theta |x - y_i|) on [0, 1]:
    the uniform grid with pitch log(1 + epsilon) / theta, capped at 1."""
    if theta <= 0 or not (0 < epsilon <= 1):
        raise ModelError("need theta > 0 and epsilon in (0, 1]")
    step = math.log1p(epsilon) / theta
    pts = [k * step for k in range(1, int(math.floor(1.0 / step)) + 1)]
    if not pts or pts[-1] < 1.0:
        pts.append(1.0)
    return np.array(pts)


# ---------------------------------------------------------------------------
# monotone interpolating classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterpClass:
    """Objectives g_lam, lam in [a, b], pointwise non-increasing in lam,
    with g_a the sum and g_b the max of the base objectives."""

    a: float
    b: float
    evaluate: object  # (lam, h) -> float
    label: object  # lam -> str
    index: object  # lam -> displayed index (p, ell, ...)
    integer: bool = False


def p_of_lambda(lam: float) -> float:
    return math.inf if lam >= 1.0 else 1.0 / (1.0 - lam)


def lambda_of_p(p: float) -> float:
    return 1.0 if math.isinf(p) else 1.0 - 1.0 / p


def _p_label(lam: float) -> str:
    p = p_of_lambda(lam)
    if math.isinf(p):
        return "L_inf"
    if abs(p - round(p)) < 1e-9:
        return f"L_{int(round(p))}"
    return f"L_{p:.3g}"


def lp_interp_class() -> InterpClass:
    from .model import Lp, evaluate_objective

    return InterpClass(
        a=0.0,
        b=1.0,
        evaluate=lambda lam, h: evaluate_objective(Lp(p_of_lambda(lam)), h),
        label=_p_label,
        index=p_of_lambda,
    )


def topl_interp_class(t: int) -> InterpClass:
    from .model import TopL, evaluate_objective

    return InterpClass(
        a=0.0,
        b=float(t - 1),
        evaluate=lambda lam, h: evaluate_objective(TopL(int(round(t - lam))), h),
        label=lambda lam: f"top-{int(round(t - lam))}",
        index=lambda lam: int(round(t - lam)),
        integer=True,
    )


class _WrappedOracle:
    """Memoizes raw calls and keeps the anchor solutions of emitted entries;
    the reported value at lam is the best of the raw solution at lam and any
    anchor from a smaller parameter (the monotone reuse rule)."""

    def __init__(self, oracle, cls: InterpClass):
        self.oracle = oracle
        self.cls = cls
        self.raw: dict = {}
        self.anchors: list = []  # (lam, solution, h)
        self.calls = 0

    def raw_at(self, lam: float):
        if lam not in self.raw:
            self.raw[lam] = self.oracle(lam)
            self.calls += 1
        return self.raw[lam]

    def best_at(self, lam: float):
        sol, h = self.raw_at(lam)
        best = (float(self.cls.evaluate(lam, h)), sol, np.asarray(h, float))
        for alam, asol, ah in self.anchors:
            if alam <= lam:
                v = float(self.cls.evaluate(lam, ah))
                if v < best[0]:
                    best = (v, asol, ah)
        return best

    def add_anchor(self, lam: float, sol, h) -> None:
        self.anchors.append((lam, sol, np.asarray(h, float)))


def build_interp_portfolio(
    oracle,
    cls: InterpClass,
    epsilon: float,
    beta: float,
    N: int,
    bisection_steps: int = 40,
    bisection_resolution: float = 1e-6,
    entry_meta=None,
) -> Portfolio:
    """(1 + epsilon)-stepping construction for a monotone interpolating class.

    Size is at most floor(log_{1+eps}(beta N)) + 1; a final entry at b that
    fails to improve by (1 + epsilon) is redundant for coverage and dropped.
    """
    if not (0 < epsilon <= 1):
        raise ModelError("epsilon must lie in (0, 1]")
    wrapped = _WrappedOracle(oracle, cls)
    entries: list = []
    seen: dict = {}

    def emit(lam: float) -> float:
        v, sol, h = wrapped.best_at(lam)
        wrapped.add_anchor(lam, sol, h)
        key = h.tobytes()
        if key not in seen:  # a later step can reuse an earlier solution
            seen[key] = len(entries)
            entries.append(
                PortfolioEntry(
                    index=cls.index(lam),
                    label=cls.label(lam),
                    solution=sol,
                    h=h,
                    value=v,
                    meta={"lam": lam, **(entry_meta(sol) if entry_meta else {})},
                )
            )
        return v

    value = emit(cls.a)
    lam = cls.a
    while lam < cls.b:
        thresh = value / (1.0 + epsilon)
        v_b, _, _ = wrapped.best_at(cls.b)
        if v_b > thresh:
            break  # no further (1+eps)-step exists; the b entry would be redundant
        lo, hi = lam, cls.b
        if cls.integer:
            while hi - lo > 1:
                mid = (int(lo) + int(hi)) // 2
                if wrapped.best_at(float(mid))[0] <= thresh:
                    hi = float(mid)
                else:
                    lo = float(mid)
        else:
            resolution = bisection_resolution * (cls.b - cls.a)
            for _ in range(bisection_steps):
                if hi - lo <= resolution:
                    break
                mid = 0.5 * (lo + hi)
                if wrapped.best_at(mid)[0] <= thresh:
                    hi = mid
                else:
                    lo = mid
        value = emit(hi)
        if value > thresh + 1e-9 * max(1.0, abs(thresh)):
            raise AssertionError("wrapped oracle lost monotonicity")
        lam = hi

    size_bound = math.floor(math.log(beta * N) / math.log1p(epsilon)) + 1
    if len(entries) > size_bound:
        raise AssertionError(
            f"portfolio size {len(entries)} exceeds bound {size_bound}"
        )
    return Portfolio(
        entries=entries,
        certificate={
            "alpha": beta * (1.0 + epsilon),
            "beta": beta,
            "epsilon": epsilon,
            "size_bound": size_bound,
        },
        oracle_calls=wrapped.calls,
    )


def coverage_value(portfolio: Portfolio, cls: InterpClass, lam: float) -> float:
    """Value promised for parameter lam: best entry taken at a parameter <= lam.

    Entries taken at smaller parameters are legitimate candidates (monotone
    reuse), so dedup of repeated solutions cannot weaken this value.
    """
    vals = [
        float(cls.evaluate(lam, e.h))
        for e in portfolio.entries
        if e.meta.get("lam", cls.a) <= lam + 1e-12
    ]
    if not vals:
        vals = [float(cls.evaluate(lam, portfolio.entries[0].h))]
    return min(vals)


# ---------------------------------------------------------------------------
# the placement specialization
# ---------------------------------------------------------------------------


def build_fsfl_portfolio(
    inst,
    epsilon: float,
    settings=None,
    oracle: str = "pipeline",
    limits=None,
):
    """L_p portfolio for a placement instance.

    ``oracle="pipeline"`` uses the bicriteria rounding pipeline (entries are
    (2 delta + theta)-subsidized); ``oracle="exact"`` uses exhaustive
    enumeration (tiny instances only; entries are delta-subsidized).
    """
    from .lp import SolverSettings
    from .model import Lp, group_distances, subsidy_of, theta_of

    settings = settings or SolverSettings()
    cls = lp_interp_class()
    theta = theta_of(inst)
    t = inst.n_groups

    if oracle == "exact":
        from .bruteforce import EnumLimits, cached_frontier

        frontier = cached_frontier(inst, limits or EnumLimits())
        if frontier.empty:
            from .relaxation import InstanceInfeasibleError

            raise InstanceInfeasibleError("no subsidized solution exists")

        def call(lam):
            from .model import evaluate_objective_rows

            vals = evaluate_objective_rows(Lp(p_of_lambda(lam)), frontier.H)
            i = int(np.argmin(vals))
            from .bruteforce import _solution_from_assignment

            sol = _solution_from_assignment(inst, frontier.assignments[i])
            return sol, frontier.H[i]

        beta = 1.0
    elif oracle == "pipeline":
        from .fsfl import solve_fsfl

        state = {"warm": None}
        by_effective: dict = {}  # probes routed to the same relaxation coincide

        def call(lam):
            p = p_of_lambda(lam)
            p_eff = math.inf if p >= settings.pnorm_epigraph_threshold else p
            if p_eff in by_effective:
                return by_effective[p_eff]
            sol, trace = solve_fsfl(inst, Lp(p), settings, warm=state["warm"])
            state["warm"] = trace.fractional
            h = group_distances(inst, sol).h
            by_effective[p_eff] = (sol, h)
            return sol, h

        beta = 20.0 * max(1.0, 1.0 / inst.delta)
    else:
        raise ModelError(f"unknown oracle {oracle!r}")

    port = build_interp_portfolio(
        call,
        cls,
        epsilon,
        beta=beta,
        N=max(t, 2),
        bisection_steps=settings.bisection_steps,
        bisection_resolution=settings.bisection_resolution,
        entry_meta=lambda sol: {"subsidy": subsidy_of(inst, sol)},
    )
    port.certificate["bicriteria"] = {
        "objective_factor": beta * (1.0 + epsilon),
        "subsidy_bound": 2.0 * inst.delta + theta if oracle == "pipeline" else inst.delta,
    }
    port.certificate["theta"] = theta
    port.certificate["delta"] = inst.delta
    return port
