"""Result documents: solutions, portfolios, and report tables.

All documents are JSON-serializable dicts, schema-checked on read, and
rendered canonically so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import math

import numpy as np

from .geo import deserts_for_solution
from .instances import check_schema, instance_key
from .model import (
    Conic,
    Instance,
    Lp,
    ModelError,
    ObjectiveSpec,
    Solution,
    TopL,
    evaluate_objective,
    group_distances,
    subsidy_of,
    theta_of,
)

SOLUTION_FORMAT = "sitefolio-solution"
PORTFOLIO_FORMAT = "sitefolio-portfolio"
VERSION = 1

SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "objective", "open", "assign", "value", "subsidy"],
    "properties": {
        "format": {"const": SOLUTION_FORMAT},
        "version": {"type": "integer"},
        "objective": {"type": "object", "required": ["kind"]},
        "open": {"type": "array", "items": {"type": "string"}},
        "assign": {"type": "object"},
        "value": {"type": "number"},
        "subsidy": {"type": "number"},
    },
}

PORTFOLIO_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "instance_key", "delta", "epsilon", "certificate", "entries"],
    "properties": {
        "format": {"const": PORTFOLIO_FORMAT},
        "version": {"type": "integer"},
        "instance_key": {"type": "string"},
        "delta": {"type": "number"},
        "epsilon": {"type": "number"},
        "certificate": {"type": "object"},
        "baseline": {"type": "object"},
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "index", "open", "assign", "value", "subsidy", "group_distances"],
            },
        },
    },
}

P_GRID = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, math.inf]


def _p_str(p: float) -> str:
    return "inf" if math.isinf(p) else (f"{int(p)}" if float(p).is_integer() else f"{p:g}")


def objective_to_doc(spec: ObjectiveSpec) -> dict:
    if isinstance(spec, Lp):
        return {"kind": "lp", "p": "inf" if spec.is_max else spec.p}
    if isinstance(spec, TopL):
        return {"kind": "topl", "ell": spec.ell}
    if isinstance(spec, Conic):
        return {"kind": "conic", "weights": [float(v) for v in spec.lam]}
    raise ModelError(f"unknown objective {spec!r}")


def objective_from_doc(doc: dict) -> ObjectiveSpec:
    kind = doc.get("kind")
    if kind == "lp":
        p = doc["p"]
        return Lp(math.inf if p == "inf" else float(p))
    if kind == "topl":
        return TopL(int(doc["ell"]))
    if kind == "conic":
        return Conic(np.array(doc["weights"], dtype=float))
    raise ModelError(f"unknown objective kind {kind!r}")


def _solution_body(inst: Instance, sol: Solution) -> dict:
    h = group_distances(inst, sol).h
    body = {
        "open": [inst.facility_ids[f] for f in sorted(sol.open)],
        "new_sites": [
            inst.facility_ids[f] for f in sorted(sol.open) if not inst.pre_opened[f]
        ],
        "assign": {
            inst.client_ids[j]: inst.facility_ids[f] for j, f in enumerate(sol.assign)
        },
        "subsidy": subsidy_of(inst, sol),
        "group_distances": [float(v) for v in h],
        "p_grid_values": {
            _p_str(p): float(evaluate_objective(Lp(p), h)) for p in P_GRID
        },
    }
    if inst.geo_doc is not None:
        rep = deserts_for_solution(inst, sol)
        body["desert_counts"] = {
            "total": rep.total,
            "by_group": [
                {"urban": k[0], "district": k[1], "count": v}
                for k, v in sorted(rep.by_group.items())
            ],
        }
    return body


def solution_to_doc(inst: Instance, sol: Solution, spec: ObjectiveSpec, meta: dict | None = None) -> dict:
    h = group_distances(inst, sol).h
    doc = {
        "format": SOLUTION_FORMAT,
        "version": VERSION,
        "objective": objective_to_doc(spec),
        "value": float(evaluate_objective(spec, h)),
        "theta": theta_of(inst),
        **_solution_body(inst, sol),
    }
    if meta:
        doc["meta"] = meta
    return doc


def solution_from_doc(inst: Instance, doc: dict) -> Solution:
    check_schema(doc, SOLUTION_SCHEMA)
    fid = {f: i for i, f in enumerate(inst.facility_ids)}
    cid = {c: j for j, c in enumerate(inst.client_ids)}
    assign = [0] * inst.n_clients
    for c, f in doc["assign"].items():
        assign[cid[c]] = fid[f]
    return Solution(open=frozenset(fid[f] for f in doc["open"]), assign=tuple(assign))


def baseline_solution(inst: Instance) -> Solution | None:
    """Pre-opened facilities only, nearest assignment; None when none exist."""
    pre = np.where(inst.pre_opened)[0]
    if len(pre) == 0:
        return None
    nearest = pre[np.argmin(inst.dist_cf[:, pre], axis=1)]
    return Solution(open=frozenset(int(f) for f in pre), assign=tuple(int(f) for f in nearest))


def portfolio_to_doc(inst: Instance, port, epsilon: float) -> dict:
    entries = []
    for e in port.entries:
        body = _solution_body(inst, e.solution)
        index = (
            {"kind": "lp", "p": "inf" if math.isinf(e.index) else float(e.index)}
            if isinstance(e.index, float)
            else {"kind": "raw", "value": str(e.index)}
        )
        entries.append(
            {
                "label": e.label,
                "index": index,
                "lam": e.meta.get("lam"),
                "value": float(e.value),
                **body,
            }
        )
    doc = {
        "format": PORTFOLIO_FORMAT,
        "version": VERSION,
        "instance_key": instance_key(inst),
        "delta": inst.delta,
        "epsilon": epsilon,
        "certificate": {
            k: (v if not isinstance(v, dict) else dict(v))
            for k, v in port.certificate.items()
        },
        "oracle_calls": port.oracle_calls,
        "entries": entries,
    }
    base = baseline_solution(inst)
    if base is not None:
        doc["baseline"] = _solution_body(inst, base)
    return doc


def group_labels(inst: Instance) -> list:
    """Human labels per group; geo instances carry their cross-product naming."""
    if inst.geo_doc is not None and "districts" in inst.geo_doc:
        labels = []
        for d in inst.geo_doc["districts"]:
            for urban in ("rural", "urban"):
                for poor in ("notpoor", "poor"):
                    labels.append(f"district {d} | {urban} | {poor}")
        if len(labels) == inst.n_groups:
            return labels
    return [f"group {s}" for s in range(inst.n_groups)]


def distance_reduction_table(doc: dict) -> dict:
    """Per-group percent reduction in group distance versus the baseline."""
    if "baseline" not in doc:
        raise ModelError("portfolio document has no baseline block")
    base = np.array(doc["baseline"]["group_distances"], dtype=float)
    cols = []
    for e in doc["entries"]:
        h = np.array(e["group_distances"], dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(base > 0, 100.0 * (base - h) / base, 0.0)
        cols.append([float(v) for v in pct])
    return {
        "columns": [e["label"] for e in doc["entries"]],
        "rows": [
            {"group": s, "percent_reduction": [c[s] for c in cols]}
            for s in range(len(base))
        ],
    }


def desert_reduction_table(doc: dict) -> dict | None:
    """Desert-count reductions versus the baseline, split by urban x district."""
    if "baseline" not in doc or "desert_counts" not in doc.get("baseline", {}):
        return None

    def counts(block):
        out = {}
        for row in block["by_group"]:
            out[(bool(row["urban"]), str(row["district"]))] = int(row["count"])
        return out

    base = counts(doc["baseline"]["desert_counts"])
    base_total = doc["baseline"]["desert_counts"]["total"]
    keys = set(base)
    for e in doc["entries"]:
        keys |= set(counts(e["desert_counts"]))
    keys = sorted(keys)
    rows = []
    for k in keys:
        row = {"urban": k[0], "district": k[1], "existing": base.get(k, 0), "reduced": []}
        for e in doc["entries"]:
            row["reduced"].append(base.get(k, 0) - counts(e["desert_counts"]).get(k, 0))
        rows.append(row)
    return {
        "columns": [e["label"] for e in doc["entries"]],
        "rows": rows,
        "total_existing": base_total,
        "total_reduced": [
            base_total - e["desert_counts"]["total"] for e in doc["entries"]
        ],
    }


def render_report(doc: dict, labels: list | None = None) -> str:
    """Plain-text report: distance reductions, then desert reductions."""
    dist = distance_reduction_table(doc)
    lines = []
    cols = dist["columns"]
    lines.append("Percent reduction in group distance vs baseline")
    head = f"{'group':<34}" + "".join(f"{c:>12}" for c in cols)
    lines.append(head)
    for r in dist["rows"]:
        name = labels[r["group"]] if labels else f"group {r['group']}"
        lines.append(
            f"{name:<34}" + "".join(f"{v:>11.1f}%" for v in r["percent_reduction"])
        )
    deserts = desert_reduction_table(doc)
    if deserts is not None:
        lines.append("")
        lines.append("Reduction in desert count vs baseline")
        lines.append(f"{'group':<34}{'existing':>10}" + "".join(f"{c:>12}" for c in cols))
        for r in deserts["rows"]:
            name = f"{'urban' if r['urban'] else 'rural'} | district {r['district']}"
            lines.append(
                f"{name:<34}{r['existing']:>10}"
                + "".join(f"{v:>12}" for v in r["reduced"])
            )
        lines.append(
            f"{'TOTAL':<34}{deserts['total_existing']:>10}"
            + "".join(f"{v:>12}" for v in deserts["total_reduced"])
        )
    return "\n".join(lines)


def trace_to_doc(inst: Instance, trace, include_arrays: bool = False) -> dict:
    """Pipeline trace as a document: per-stage subsidy/objective/closeness
    certificates, optionally with the full per-stage arrays (golden tests on
    tiny instances; the explorer only needs the summaries)."""
    stages = []
    for st in trace.stages:
        rec = {
            "name": st.name,
            "subsidy": float(st.subsidy),
            "objective": float(st.objective),
            "max_closeness": (
                None
                if st.closeness is None
                else float(st.closeness.Delta.max(initial=0.0))
            ),
        }
        if include_arrays:
            rec["x"] = [[float(v) for v in row] for row in st.x]
            rec["y"] = [float(v) for v in st.y]
            rec["loss"] = [float(v) for v in st.loss]
            rec["dist"] = [float(v) for v in st.dist]
            if st.closeness is not None:
                rec["closeness"] = [float(v) for v in st.closeness.Delta]
        stages.append(rec)
    return {
        "format": "sitefolio-trace",
        "version": VERSION,
        "instance_key": instance_key(inst),
        "alpha": float(trace.alpha),
        "theta": float(trace.theta),
        "delta": float(trace.delta),
        "relaxation_value": float(trace.relaxation_value),
        "fw_gap": None if trace.fw_gap is None else float(trace.fw_gap),
        "core_clients": list(trace.core.core) if trace.core else [],
        "stages": stages,
    }


def write_json(doc: dict, path: str) -> None:
    import json
    import os

    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path: str) -> dict:
    import json

    with open(path) as fh:
        return json.load(fh)
