"""Core domain types: problem instances, solutions, objectives, and their evaluation.

Conventions used throughout the package:

* clients and facilities are addressed by integer index; string ids live on the
  instance and are only used at the document (file/API) layer,
* all arrays are numpy, frozen after construction (``writeable=False``),
* a "counted" facility is one whose loss is charged against the subsidy budget.
  By default pre-opened facilities are not counted; the ``count_all_losses``
  flag restores the pure model where every open facility's loss counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TOL = 1e-9
FEAS_EPS = 1e-12  # threshold for "fractionally assigned" support

EARTH_RADIUS_MILES = 3958.7613


class ModelError(ValueError):
    """Structurally invalid input (wrong shapes, unassigned clients, ...)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def haversine_miles(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in miles (mean Earth radius), vectorized."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


@dataclass(frozen=True)
class Metric:
    """Distances over clients + facilities (clients first).

    Either backed by a dense matrix or by coordinates.  Coordinate-backed
    metrics (euclidean / haversine) satisfy the triangle inequality by
    construction, which the validator exploits.
    """

    kind: str  # "dense" | "euclidean" | "haversine_miles"
    matrix: np.ndarray | None = None  # (n+m, n+m), used when kind == "dense"
    points: np.ndarray | None = None  # (n+m, 2); lat/lon degrees for haversine

    def __post_init__(self):
        if self.kind == "dense":
            if self.matrix is None:
                raise ModelError("dense metric requires a matrix")
            m = _frozen(self.matrix)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ModelError("distance matrix must be square")
            object.__setattr__(self, "matrix", m)
        elif self.kind in ("euclidean", "haversine_miles"):
            if self.points is None:
                raise ModelError("coordinate metric requires points")
            object.__setattr__(self, "points", _frozen(self.points))
        else:
            raise ModelError(f"unknown metric kind {self.kind!r}")

    @property
    def size(self) -> int:
        return len(self.matrix) if self.kind == "dense" else len(self.points)

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.kind == "dense":
            return self.matrix[np.ix_(rows, cols)]
        p, q = self.points[rows], self.points[cols]
        if self.kind == "euclidean":
            return np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(axis=2))
        return haversine_miles(
            p[:, 0][:, None], p[:, 1][:, None], q[:, 0][None, :], q[:, 1][None, :]
        )

    def full(self) -> np.ndarray:
        idx = np.arange(self.size)
        return self.matrix if self.kind == "dense" else self.block(idx, idx)


@dataclass(frozen=True)
class Instance:
    """A subsidized facility placement instance.

    ``groups`` is the (n_clients, t) nonnegative membership matrix; rows need
    not sum to one (weighted singleton groups are a legitimate use).
    """

    client_ids: tuple
    revenues: np.ndarray
    facility_ids: tuple
    costs: np.ndarray
    pre_opened: np.ndarray  # bool per facility
    metric: Metric
    groups: np.ndarray
    delta: float
    count_all_losses: bool = False
    geo_doc: dict | None = field(default=None, repr=False, compare=False)
    dist_cf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, m = len(self.client_ids), len(self.facility_ids)
        object.__setattr__(self, "client_ids", tuple(self.client_ids))
        object.__setattr__(self, "facility_ids", tuple(self.facility_ids))
        object.__setattr__(self, "revenues", _frozen(self.revenues))
        object.__setattr__(self, "costs", _frozen(self.costs))
        object.__setattr__(self, "pre_opened", _frozen(self.pre_opened, bool))
        object.__setattr__(self, "groups", _frozen(self.groups))
        if self.revenues.shape != (n,) or self.costs.shape != (m,):
            raise ModelError("revenues/costs do not match client/facility counts")
        if self.pre_opened.shape != (m,):
            raise ModelError("pre_opened does not match facility count")
        if self.metric.size != n + m:
            raise ModelError(
                f"metric covers {self.metric.size} points, expected {n + m}"
            )
        if self.groups.ndim != 2 or self.groups.shape[0] != n:
            raise ModelError("groups must be an (n_clients, t) matrix")
        cf = self.metric.block(np.arange(n), np.arange(n, n + m))
        object.__setattr__(self, "dist_cf", _frozen(cf))

    @property
    def n_clients(self) -> int:
        return len(self.client_ids)

    @property
    def n_facilities(self) -> int:
        return len(self.facility_ids)

    @property
    def n_groups(self) -> int:
        return self.groups.shape[1]

    @property
    def total_revenue(self) -> float:
        return float(self.revenues.sum())

    def counted(self) -> np.ndarray:
        """Mask of facilities whose losses count against the subsidy budget."""
        if self.count_all_losses:
            return np.ones(self.n_facilities, dtype=bool)
        return ~self.pre_opened

    def with_flags(self, **kw) -> "Instance":
        return replace(self, **kw)


@dataclass(frozen=True)
class Solution:
    """Integral solution: open facility set plus a full client assignment."""

    open: frozenset
    assign: tuple  # client index -> facility index

    def __post_init__(self):
        object.__setattr__(self, "open", frozenset(self.open))
        object.__setattr__(self, "assign", tuple(int(a) for a in self.assign))

    def check(self, inst: Instance) -> None:
        if len(self.assign) != inst.n_clients:
            raise ModelError("assignment does not cover every client")
        for j, f in enumerate(self.assign):
            if f not in self.open:
                raise ModelError(f"client {j} assigned to closed facility {f}")
        for f in range(inst.n_facilities):
            if inst.pre_opened[f] and f not in self.open:
                raise ModelError(f"pre-opened facility {f} missing from open set")

    def distances(self, inst: Instance) -> np.ndarray:
        return inst.dist_cf[np.arange(inst.n_clients), np.array(self.assign)]


@dataclass(frozen=True)
class FractionalSolution:
    """Relaxed solution: fractional assignments x, openings y, losses, distances."""

    x: np.ndarray  # (n_clients, n_facilities) in [0, 1]
    y: np.ndarray  # (n_facilities,) in [0, 1]
    loss: np.ndarray  # (n_facilities,) >= 0
    dist: np.ndarray  # (n_clients,) expected distances

    def __post_init__(self):
        for name in ("x", "y", "loss", "dist"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @staticmethod
    def from_xy(inst: Instance, x: np.ndarray, y: np.ndarray) -> "FractionalSolution":
        """Derive canonical losses and expected distances from (x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        loss = np.maximum(0.0, inst.costs * y - inst.revenues @ x)
        dist = (x * inst.dist_cf).sum(axis=1)
        return FractionalSolution(x=x, y=y, loss=loss, dist=dist)

    def feasibility_violation(self, inst: Instance) -> float:
        """Largest violation of the relaxation constraints (0 when feasible)."""
        v = float(np.abs(self.x.sum(axis=1) - 1.0).max(initial=0.0))
        v = max(v, float((self.x - self.y[None, :]).max(initial=0.0)))
        v = max(v, float((-self.x).max(initial=0.0)), float((-self.y).max(initial=0.0)))
        v = max(v, float((self.y - 1.0).max(initial=0.0)))
        pre = inst.pre_opened
        if pre.any():
            v = max(v, float(np.abs(self.y[pre] - 1.0).max()))
        return v

    def counted_loss(self, inst: Instance) -> float:
        return float(self.loss[inst.counted()].sum())

    def subsidy(self, inst: Instance) -> float:
        total = inst.total_revenue
        counted = self.counted_loss(inst)
        if total <= 0.0:
            return 0.0 if counted <= TOL else math.inf
        return counted / total


@dataclass(frozen=True)
class Conic:
    """Conic combination of group distances with weights lam >= 0."""

    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _frozen(self.lam))
        if self.lam.ndim != 1 or (self.lam < 0).any() or not self.lam.any():
            raise ModelError("conic weights must be nonnegative and not all zero")


@dataclass(frozen=True)
class Lp:
    """L_p norm of the group distance vector; p = math.inf is the max norm."""

    p: float

    def __post_init__(self):
        if not (self.p >= 1.0):
            raise ModelError("p must be >= 1")

    @property
    def is_max(self) -> bool:
        return math.isinf(self.p)


@dataclass(frozen=True)
class TopL:
    """Sum of the ell largest group distances."""

    ell: int

    def __post_init__(self):
        if self.ell < 1:
            raise ModelError("ell must be >= 1")


ObjectiveSpec = Conic | Lp | TopL


@dataclass(frozen=True)
class GroupDistanceVector:
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_triangle(d: np.ndarray, rng: np.random.Generator) -> tuple | None:
    """Return an offending (i, j, k) triple or None. Full check for n <= 512."""
    n = len(d)
    if n <= 512:
        for k in range(n):
            slack = d - (d[:, k][:, None] + d[k, :][None, :])
            if slack.max() > TOL:
                i, j = np.unravel_index(int(np.argmax(slack)), slack.shape)
                return (int(i), int(j), int(k))
        return None
    m = 200_000
    i = rng.integers(0, n, size=m)
    j = rng.integers(0, n, size=m)
    k = rng.integers(0, n, size=m)
    bad = d[i, j] > d[i, k] + d[k, j] + TOL
    if bad.any():
        w = int(np.argmax(bad))
        return (int(i[w]), int(j[w]), int(k[w]))
    return None


def validate_instance(inst: Instance) -> ValidationReport:
    """Semantic validation; structural problems raise at construction instead."""
    out = []
    if (inst.revenues < 0).any():
        out.append(Violation("negative_revenue", "client revenues must be nonnegative"))
    if (inst.costs < 0).any():
        out.append(Violation("negative_cost", "facility costs must be nonnegative"))
    if not inst.delta > 0:
        out.append(Violation("nonpositive_delta", "delta must be positive"))
    if (inst.groups < 0).any():
        out.append(Violation("negative_membership", "group weights must be nonnegative"))
    if inst.revenues.max(initial=0.0) > 0 and (inst.costs <= 0).any():
        out.append(
            Violation("theta_undefined", "zero-cost facility with positive revenues")
        )
    if inst.metric.kind == "dense":
        d = inst.metric.matrix
        if (d < -TOL).any():
            out.append(Violation("negative_distance", "distances must be nonnegative"))
        if np.abs(d - d.T).max(initial=0.0) > TOL:
            out.append(Violation("asymmetric", "distance matrix must be symmetric"))
        else:
            triple = _check_triangle(d, np.random.default_rng(0))
            if triple is not None:
                out.append(
                    Violation(
                        "metric_violation",
                        f"triangle inequality violated at triple {triple}",
                    )
                )
    return ValidationReport(tuple(out))


def group_distances(inst: Instance, sol) -> GroupDistanceVector:
    """h_s = sum_j mu[j,s] * d_j with d_j the (expected) assigned distance."""
    if isinstance(sol, Solution):
        sol.check(inst)
        d = sol.distances(inst)
    elif isinstance(sol, FractionalSolution):
        d = sol.dist
    else:
        d = np.asarray(sol, dtype=float)  # raw distance vector
    if len(d) != inst.n_clients:
        raise ModelError("distance vector does not match client count")
    return GroupDistanceVector(h=d @ inst.groups)


def evaluate_objective(spec: ObjectiveSpec, h) -> float:
    """Evaluate one objective on a group distance vector. h must be >= 0."""
    hv = h.h if isinstance(h, GroupDistanceVector) else np.asarray(h, dtype=float)
    return float(evaluate_objective_rows(spec, hv[None, :])[0])


def evaluate_objective_rows(spec: ObjectiveSpec, H: np.ndarray) -> np.ndarray:
    """Vectorized evaluation over rows of H (k, t)."""
    H = np.asarray(H, dtype=float)
    if isinstance(spec, Conic):
        if H.shape[1] != len(spec.lam):
            raise ModelError("conic weight length does not match group count")
        return H @ spec.lam
    if isinstance(spec, Lp):
        if spec.is_max:
            return H.max(axis=1)
        if spec.p == 1.0:
            return H.sum(axis=1)
        # max-factored exponentiation keeps large p from overflowing
        hmax = H.max(axis=1)
        out = np.zeros(len(H))
        pos = hmax > 0
        if pos.any():
            ratios = H[pos] / hmax[pos][:, None]
            out[pos] = hmax[pos] * (ratios**spec.p).sum(axis=1) ** (1.0 / spec.p)
        return out
    if isinstance(spec, TopL):
        t = H.shape[1]
        if spec.ell > t:
            raise ModelError("ell exceeds the number of groups")
        if spec.ell == t:
            return H.sum(axis=1)
        part = np.partition(H, t - spec.ell, axis=1)
        return part[:, t - spec.ell :].sum(axis=1)
    raise ModelError(f"unknown objective {spec!r}")


def objective_value(inst: Instance, spec: ObjectiveSpec, sol) -> float:
    return evaluate_objective(spec, group_distances(inst, sol))


def facility_revenues(inst: Instance, sol: Solution) -> np.ndarray:
    rev = np.zeros(inst.n_facilities)
    np.add.at(rev, np.array(sol.assign), inst.revenues)
    return rev


def subsidy_of(inst: Instance, sol: Solution, count_all_losses: bool | None = None) -> float:
    """Total counted loss of open facilities as a fraction of total revenue.

    Pre-opened facilities are excluded from the numerator unless
    ``count_all_losses`` (argument or instance flag) is set.
    """
    sol.check(inst)
    count_all = inst.count_all_losses if count_all_losses is None else count_all_losses
    rev = facility_revenues(inst, sol)
    total = inst.total_revenue
    loss = 0.0
    for f in sorted(sol.open):
        if not count_all and inst.pre_opened[f]:
            continue
        loss += max(0.0, float(inst.costs[f] - rev[f]))
    if total <= 0.0:
        return 0.0 if loss <= TOL else math.inf
    return loss / total


def is_subsidized(inst: Instance, sol: Solution, delta: float | None = None) -> bool:
    d = inst.delta if delta is None else delta
    return subsidy_of(inst, sol) <= d + TOL


def theta_of(inst: Instance) -> float:
    """theta = max_{j, f} r_j / c_f; 0 when all revenues vanish."""
    rmax = float(inst.revenues.max(initial=0.0))
    if rmax == 0.0:
        return 0.0
    cmin = float(inst.costs.min())
    if cmin <= 0.0:
        raise ModelError("theta undefined: zero-cost facility with positive revenues")
    return rmax / cmin
