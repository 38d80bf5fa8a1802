"""Instance documents, synthetic generators, and adversarial constructions."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .model import (
    Instance,
    Metric,
    ModelError,
    Solution,
    validate_instance,
)

INSTANCE_FORMAT = "sitefolio-instance"
INSTANCE_VERSION = 1

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "delta", "clients", "facilities", "metric"],
    "properties": {
        "format": {"const": INSTANCE_FORMAT},
        "version": {"type": "integer", "minimum": 1},
        "delta": {"type": "number"},
        "flags": {
            "type": "object",
            "properties": {"count_all_losses": {"type": "boolean"}},
        },
        "clients": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "revenue"],
                "properties": {
                    "id": {"type": "string"},
                    "revenue": {"type": "number"},
                },
            },
        },
        "facilities": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "cost"],
                "properties": {
                    "id": {"type": "string"},
                    "cost": {"type": "number"},
                    "pre_opened": {"type": "boolean"},
                },
            },
        },
        "metric": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["dense", "euclidean", "haversine_miles"]},
                "matrix": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "clients": {"type": "array", "items": _POINT},
                "facilities": {"type": "array", "items": _POINT},
            },
        },
        "groups": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "geo": {"type": "object"},
    },
}


class SchemaError(ModelError):
    """Document violates the instance/portfolio schema; message carries the path."""


def check_schema(doc, schema) -> None:
    import jsonschema

    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {e.message}") from None


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def instance_to_doc(inst: Instance) -> dict:
    doc = {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "delta": inst.delta,
        "flags": {"count_all_losses": inst.count_all_losses},
        "clients": [
            {"id": cid, "revenue": float(r)}
            for cid, r in zip(inst.client_ids, inst.revenues)
        ],
        "facilities": [
            {"id": fid, "cost": float(c), "pre_opened": bool(p)}
            for fid, c, p in zip(inst.facility_ids, inst.costs, inst.pre_opened)
        ],
        "groups": [[float(v) for v in row] for row in inst.groups],
    }
    n = inst.n_clients
    met = inst.metric
    if met.kind == "dense":
        doc["metric"] = {"kind": "dense", "matrix": [[float(v) for v in row] for row in met.matrix]}
    else:
        pts = met.points
        doc["metric"] = {
            "kind": met.kind,
            "clients": [[float(a), float(b)] for a, b in pts[:n]],
            "facilities": [[float(a), float(b)] for a, b in pts[n:]],
        }
    if inst.geo_doc is not None:
        doc["geo"] = inst.geo_doc
    return doc


def instance_from_doc(doc: dict) -> Instance:
    check_schema(doc, INSTANCE_SCHEMA)
    clients = doc["clients"]
    facilities = doc["facilities"]
    n, m = len(clients), len(facilities)
    met = doc["metric"]
    if met["kind"] == "dense":
        if "matrix" not in met:
            raise SchemaError("metric: dense metric requires 'matrix'")
        metric = Metric("dense", matrix=np.array(met["matrix"], dtype=float))
    else:
        if "clients" not in met or "facilities" not in met:
            raise SchemaError("metric: coordinate metric requires 'clients' and 'facilities'")
        pts = np.array(list(met["clients"]) + list(met["facilities"]), dtype=float)
        metric = Metric(met["kind"], points=pts)
    groups = doc.get("groups")
    if groups is None:
        groups = np.ones((n, 1))  # documented default: one all-ones group
    else:
        groups = np.array(groups, dtype=float)
    return Instance(
        client_ids=tuple(c["id"] for c in clients),
        revenues=np.array([c["revenue"] for c in clients], dtype=float),
        facility_ids=tuple(f["id"] for f in facilities),
        costs=np.array([f["cost"] for f in facilities], dtype=float),
        pre_opened=np.array([f.get("pre_opened", False) for f in facilities], dtype=bool),
        metric=metric,
        groups=groups,
        delta=float(doc["delta"]),
        count_all_losses=bool(doc.get("flags", {}).get("count_all_losses", False)),
        geo_doc=doc.get("geo"),
    )


def save_instance(inst: Instance, path: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(instance_to_doc(inst), fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_instance(path: str, validate: bool = True) -> Instance:
    with open(path) as fh:
        doc = json.load(fh)
    inst = instance_from_doc(doc)
    if validate:
        report = validate_instance(inst)
        if not report.ok:
            msgs = "; ".join(v.message for v in report.violations)
            raise ModelError(f"invalid instance {path}: {msgs}")
    return inst


def instance_key(inst: Instance) -> str:
    """Deterministic content hash of the instance document."""
    import hashlib

    return hashlib.sha256(canonical_json(instance_to_doc(inst)).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def gen_random(
    seed: int,
    n_clients: int = 8,
    n_facilities: int = 3,
    n_groups: int = 2,
    delta: float = 0.5,
    revenue_range=(0.0, 1.0),
    cost_range=(0.5, 2.0),
    pre_opened_prob: float = 0.0,
    singleton_groups: bool = False,
) -> Instance:
    """Uniform points in the unit square with a Euclidean metric."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_clients + n_facilities, 2))
    revenues = rng.uniform(*revenue_range, size=n_clients)
    costs = rng.uniform(*cost_range, size=n_facilities)
    pre = rng.random(n_facilities) < pre_opened_prob
    if singleton_groups:
        groups = np.eye(n_clients)
    else:
        groups = np.zeros((n_clients, n_groups))
        member = rng.integers(0, n_groups, size=n_clients)
        groups[np.arange(n_clients), member] = rng.uniform(0.5, 2.0, size=n_clients)
    return Instance(
        client_ids=tuple(f"c{j}" for j in range(n_clients)),
        revenues=revenues,
        facility_ids=tuple(f"f{f}" for f in range(n_facilities)),
        costs=costs,
        pre_opened=pre,
        metric=Metric("euclidean", points=pts),
        groups=groups,
        delta=delta,
    )


def gen_conic_lower_bound(N: int) -> np.ndarray:
    """Explicit point set needing 2^N - 1 portfolio entries at factor 2.

    Point x(T) has coordinate a^|T| inside T and b = 2N a^N outside, a = 3.
    Rows are ordered by the subset bitmask (1..2^N - 1).
    """
    if N < 1 or N > 12:
        raise ModelError("N must be in [1, 12]")
    a, b = 3.0, 2.0 * N * 3.0**N
    points = []
    for mask in range(1, 2**N):
        size = bin(mask).count("1")
        row = [a**size if (mask >> i) & 1 else b for i in range(N)]
        points.append(row)
    return np.array(points)


def fsfl_lower_bound_level(alpha: float, t_target: int) -> int:
    """Highest L with 1 + L(gamma^{2L} + 1) <= t_target, gamma = 2 alpha."""
    gamma = 2.0 * alpha
    L = 0
    while 1 + (L + 1) * (gamma ** (2 * (L + 1)) + 1) <= t_target:
        L += 1
    return L


def gen_fsfl_lower_bound(alpha: float, t_target: int) -> Instance:
    """Star-metric instance where every O(1) portfolio needs L entries.

    A weighted singleton group per client; closing the facility at leaf a_i
    produces the weighted distance vector (gamma^i, gamma^{-i} x gamma^{2L}).
    """
    if alpha <= 1:
        raise ModelError("alpha must exceed 1")
    gamma = 2.0 * alpha
    L = fsfl_lower_bound_level(alpha, t_target)
    if L < 1:
        raise ModelError("t_target too small for L >= 1")
    leaf_clients = int(round(gamma ** (2 * L))) + 1
    t = 1 + L * leaf_clients

    # vertices: a_0 (center), a_1..a_L (leaves); facility at each vertex
    n_vertices = L + 1
    client_vertex = [0]
    weights = [gamma ** (L * L)]
    revenues = [0.0]
    for i in range(1, L + 1):
        r = 1.0 / leaf_clients
        client_vertex.extend([i] * leaf_clients)
        weights.extend([gamma**i] + [gamma**-i] * (leaf_clients - 1))
        revenues.extend([r] * leaf_clients)
    n = len(client_vertex)

    def vdist(u, v):
        if u == v:
            return 0.0
        if u == 0 or v == 0:
            return 1.0
        return 2.0
    pts = client_vertex + list(range(n_vertices))
    size = n + n_vertices
    matrix = np.zeros((size, size))
    for a in range(size):
        for b in range(size):
            matrix[a, b] = vdist(pts[a], pts[b])
    groups = np.zeros((n, t))
    groups[np.arange(n), np.arange(n)] = weights
    return Instance(
        client_ids=tuple(f"c{j}" for j in range(n)),
        revenues=np.array(revenues),
        facility_ids=tuple(f"a{i}" for i in range(n_vertices)),
        costs=np.ones(n_vertices),
        pre_opened=np.zeros(n_vertices, dtype=bool),
        metric=Metric("dense", matrix=matrix),
        groups=groups,
        delta=1.0 / (2 * L),
    )


def fsfl_lower_bound_closure(inst: Instance, closed: int) -> Solution:
    """The solution that opens every facility except ``closed``."""
    m = inst.n_facilities
    if not 0 <= closed < m:
        raise ModelError("closed facility out of range")
    open_set = frozenset(f for f in range(m) if f != closed)
    assign = []
    for j in range(inst.n_clients):
        home = int(np.argmin(inst.dist_cf[j]))
        if home != closed:
            assign.append(home)
        else:
            # travel one unit: center if a leaf closed, else any leaf
            assign.append(0 if closed != 0 else 1)
    return Solution(open=open_set, assign=tuple(assign))


def gen_hardness_instance(A, delta: float = 1e-12) -> Instance:
    """Two-facility instance whose both-open feasibility encodes equal-sum
    partition of A.  T^2 zero-revenue clients sit on each facility; the T
    revenue clients are one unit from both facilities."""
    A = [float(a) for a in A]
    if not A or any(a <= 0 for a in A):
        raise ModelError("A must be a nonempty list of positive numbers")
    T = len(A)
    c = 0.5 * sum(A)
    n_zero = T * T
    # locations: 0 = facility 1, 1 = facility 2, 2 = midpoint
    loc = [0] * n_zero + [1] * n_zero + [2] * T + [0, 1]
    n = 2 * n_zero + T

    def ldist(u, v):
        if u == v:
            return 0.0
        if 2 in (u, v):
            return 1.0
        return 2.0

    size = n + 2
    matrix = np.array([[ldist(loc[a], loc[b]) for b in range(size)] for a in range(size)])
    revenues = np.concatenate([np.zeros(2 * n_zero), np.array(A)])
    return Instance(
        client_ids=tuple(f"c{j}" for j in range(n)),
        revenues=revenues,
        facility_ids=("f1", "f2"),
        costs=np.array([c, c]),
        pre_opened=np.array([False, False]),
        metric=Metric("dense", matrix=matrix),
        groups=np.ones((n, 1)),
        delta=delta,
    )


def gen_topl_gap(N: int, S: float | None = None, L: int | None = None):
    """Vectors v(s) (S^{s^2} copies of S^{-2s}) separating top-l and L_p
    portfolio sizes.  Returns (points, S, L)."""
    if S is None:
        if N < 16:
            raise ModelError("N too small; supply S and L overrides")
        logS = (math.log(N)) ** (1 / 3) * (math.log(math.log(N))) ** (2 / 3)
        S = math.exp(logS)
    if L is None:
        L = int(math.floor(math.sqrt(math.log(N) / math.log(S))))
    if L < 2:
        raise ModelError("construction needs L >= 2")
    if S ** (L * L) > N:
        raise ModelError("N too small for the requested S, L")
    points = np.zeros((L, N))
    for s in range(1, L + 1):
        copies = int(round(S ** (s * s)))
        points[s - 1, :copies] = S ** (-2.0 * s)
    return points, S, L
