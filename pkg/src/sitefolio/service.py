"""HTTP API for the explorer: instance upload, async portfolio jobs, results.

Jobs are content-addressed (hash of instance document + parameters), results
live in a flat-file cache written via temp-file + atomic rename, and repeated
submissions of the same work return the same job.  At most one computation
runs per job id.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from . import documents, instances, portfolio as portfolio_mod
from .geo import deserts_for_solution, records_from_geo_doc, solution_sites
from .lp import SolverSettings
from .model import ModelError, validate_instance


def _hash(payload: dict) -> str:
    return hashlib.sha256(instances.canonical_json(payload).encode()).hexdigest()[:16]


def _atomic_write(path: str, doc: dict) -> None:
    tmp = f"{path}.tmp{os.getpid()}.{threading.get_ident()}"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


class JobStore:
    """Flat-file job records under cache_dir/{instances,jobs}."""

    def __init__(self, cache_dir: str):
        self.dir = cache_dir
        os.makedirs(os.path.join(cache_dir, "instances"), exist_ok=True)
        os.makedirs(os.path.join(cache_dir, "jobs"), exist_ok=True)

    def instance_path(self, iid: str) -> str:
        return os.path.join(self.dir, "instances", f"{iid}.json")

    def job_dir(self, jid: str) -> str:
        return os.path.join(self.dir, "jobs", jid)

    def put_instance(self, doc: dict) -> str:
        iid = _hash(doc)
        path = self.instance_path(iid)
        if not os.path.exists(path):
            _atomic_write(path, doc)
        return iid

    def get_instance(self, iid: str) -> dict | None:
        path = self.instance_path(iid)
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            return json.load(fh)

    def job_status(self, jid: str) -> dict | None:
        path = os.path.join(self.job_dir(jid), "status.json")
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            return json.load(fh)

    def set_job_status(self, jid: str, status: dict) -> None:
        os.makedirs(self.job_dir(jid), exist_ok=True)
        _atomic_write(os.path.join(self.job_dir(jid), "status.json"), status)

    def result(self, jid: str) -> dict | None:
        path = os.path.join(self.job_dir(jid), "result.json")
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            return json.load(fh)

    def put_result(self, jid: str, doc: dict) -> None:
        os.makedirs(self.job_dir(jid), exist_ok=True)
        _atomic_write(os.path.join(self.job_dir(jid), "result.json"), doc)


class PortfolioRequest(BaseModel):
    instance_id: str
    delta: float | None = None
    epsilon: float = 0.25
    oracle: str = "pipeline"
    fw_gap: float | None = None
    max_iterations: int | None = None
    bisection_steps: int | None = None
    epigraph_threshold: float | None = None


def create_app(cache_dir: str, workers: int = 2) -> FastAPI:
    app = FastAPI(title="sitefolio", version="0.1.0")
    store = JobStore(cache_dir)
    pool = ThreadPoolExecutor(max_workers=workers)
    running: dict = {}
    lock = threading.Lock()

    def run_job(jid: str, inst_doc: dict, req: PortfolioRequest) -> None:
        try:
            inst = instances.instance_from_doc(inst_doc)
            if req.delta is not None:
                inst = inst.with_flags(delta=req.delta)
            kw = {}
            if req.fw_gap:
                kw["fw_gap"] = req.fw_gap
            if req.max_iterations:
                kw["max_iterations"] = req.max_iterations
            if req.bisection_steps:
                kw["bisection_steps"] = req.bisection_steps
            if req.epigraph_threshold:
                kw["pnorm_epigraph_threshold"] = req.epigraph_threshold
            port = portfolio_mod.build_fsfl_portfolio(
                inst, epsilon=req.epsilon, settings=SolverSettings(**kw), oracle=req.oracle
            )
            doc = documents.portfolio_to_doc(inst, port, req.epsilon)
            doc["job_id"] = jid
            store.put_result(jid, doc)
            store.set_job_status(jid, {"state": "done"})
        except Exception as e:  # surfaced verbatim to the client
            store.set_job_status(jid, {"state": "failed", "error": f"{type(e).__name__}: {e}"})
        finally:
            with lock:
                running.pop(jid, None)

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.post("/instances")
    def post_instance(doc: dict):
        try:
            inst = instances.instance_from_doc(doc)
            report = validate_instance(inst)
        except (ModelError, instances.SchemaError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        if not report.ok:
            raise HTTPException(
                status_code=400, detail="; ".join(v.message for v in report.violations)
            )
        iid = store.put_instance(instances.instance_to_doc(inst))
        return {"instance_id": iid}

    @app.post("/portfolios")
    def post_portfolio(req: PortfolioRequest):
        inst_doc = store.get_instance(req.instance_id)
        if inst_doc is None:
            raise HTTPException(status_code=404, detail="unknown instance id")
        jid = _hash({"instance": inst_doc, "params": req.model_dump()})
        status = store.job_status(jid)
        if status is None or (status["state"] == "failed"):
            with lock:
                if jid not in running:
                    store.set_job_status(jid, {"state": "running"})
                    running[jid] = pool.submit(run_job, jid, inst_doc, req)
        return {"job_id": jid}

    @app.get("/portfolios/{jid}")
    def get_portfolio(jid: str, response: Response):
        status = store.job_status(jid)
        if status is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        if status["state"] == "running":
            response.status_code = 409
            response.headers["Retry-After"] = "2"
            return {"state": "running"}
        if status["state"] == "failed":
            return {"state": "failed", "error": status.get("error", "")}
        doc = store.result(jid)
        if doc is None:
            raise HTTPException(status_code=404, detail="result missing")
        return doc

    @app.get("/solutions/{sid}/geojson-like")
    def get_solution_geo(sid: str):
        jid, _, idx = sid.partition("-")
        if not idx.isdigit():
            raise HTTPException(status_code=404, detail="solution id is JOB-INDEX")
        doc = store.result(jid)
        if doc is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        k = int(idx)
        if k >= len(doc["entries"]):
            raise HTTPException(status_code=404, detail="entry index out of range")
        inst_doc = store.get_instance(doc["instance_key"])
        if inst_doc is None:
            raise HTTPException(status_code=404, detail="instance missing from cache")
        inst = instances.instance_from_doc(inst_doc)
        if inst.metric.points is None:
            raise HTTPException(status_code=404, detail="instance has no coordinates")
        sol = documents.solution_from_doc(
            inst,
            {
                "format": documents.SOLUTION_FORMAT,
                "version": documents.VERSION,
                "objective": {"kind": "lp", "p": 1},
                "value": 0.0,
                "subsidy": 0.0,
                "open": doc["entries"][k]["open"],
                "assign": doc["entries"][k]["assign"],
            },
        )
        pre, new = solution_sites(inst, sol)
        features = [
            {"id": s.id, "lat": s.lat, "lon": s.lon, "pre_opened": kind == "pre"}
            for kind, lst in (("pre", pre), ("new", new))
            for s in lst
        ]
        out = {"type": "site-collection", "entry": doc["entries"][k]["label"], "sites": features}
        if inst.geo_doc is not None:
            rep = deserts_for_solution(inst, sol)
            records, _ = records_from_geo_doc(inst.geo_doc)
            out["deserts"] = [
                {"id": r.id, "lat": r.lat, "lon": r.lon, "desert": bool(v)}
                for r, v in zip(records, rep.verdicts)
            ]
        return out

    return app
