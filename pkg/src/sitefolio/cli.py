"""Command-line entry points.

    sitefolio solve INSTANCE --objective lp:2 [--exact] [--out FILE]
    sitefolio exact INSTANCE --objective topl:3
    sitefolio portfolio INSTANCE --epsilon 0.25 [--class lp|topl] [--oracle ...]
    sitefolio gen {random,hardness,fsfl-lb,state,geo} ... --out ...
    sitefolio deserts BLOCKGROUPS.csv SITES.csv
    sitefolio report PORTFOLIO.json
    sitefolio serve --port 8080 --cache DIR
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bruteforce, documents, fsfl, geo, instances, portfolio as portfolio_mod
from .lp import SolverSettings
from .model import Conic, Lp, ModelError, TopL, validate_instance
from .relaxation import InstanceInfeasibleError


def parse_objective(text: str):
    kind, _, arg = text.partition(":")
    if kind == "lp":
        return Lp(math.inf if arg in ("inf", "infinity") else float(arg))
    if kind == "topl":
        return TopL(int(arg))
    if kind == "conic":
        return Conic(np.array([float(v) for v in arg.split(",")], dtype=float))
    raise ModelError(f"cannot parse objective {text!r} (lp:P | topl:L | conic:w1,w2,...)")


def _emit(doc, out: str | None) -> None:
    if out:
        documents.write_json(doc, out)
    else:
        json.dump(doc, sys.stdout, sort_keys=True, indent=1)
        sys.stdout.write("\n")


def _settings(args) -> SolverSettings:
    kw = {}
    if getattr(args, "fw_gap", None):
        kw["fw_gap"] = args.fw_gap
    if getattr(args, "max_iterations", None):
        kw["max_iterations"] = args.max_iterations
    if getattr(args, "engine", None):
        kw["lp_engine"] = args.engine
    if getattr(args, "bisection_steps", None):
        kw["bisection_steps"] = args.bisection_steps
    if getattr(args, "epigraph_threshold", None):
        kw["pnorm_epigraph_threshold"] = args.epigraph_threshold
    return SolverSettings(**kw)


def cmd_solve(args) -> int:
    inst = instances.load_instance(args.instance)
    spec = parse_objective(args.objective)
    settings = _settings(args)
    if args.dump_lp:
        from .relaxation import build_relaxation

        with open(args.dump_lp, "w") as fh:
            fh.write(build_relaxation(inst, spec).prob.to_lp_text() + "\n")
    if args.exact:
        res = bruteforce.exact_fsfl(inst, spec)
        if not res.feasible:
            print("no subsidized solution exists within limits", file=sys.stderr)
            return 3
        doc = documents.solution_to_doc(
            inst, res.solution, spec, meta={"exact": True, "certified": res.certified}
        )
    else:
        sol, trace = fsfl.solve_fsfl(inst, spec, settings)
        doc = documents.solution_to_doc(
            inst,
            sol,
            spec,
            meta={
                "exact": False,
                "relaxation_value": trace.relaxation_value,
                "alpha": trace.alpha,
                "theta": trace.theta,
                "stage_subsidies": {st.name: st.subsidy for st in trace.stages},
            },
        )
    _emit(doc, args.out)
    return 0


def cmd_portfolio(args) -> int:
    inst = instances.load_instance(args.instance)
    settings = _settings(args)
    if args.cls == "lp":
        port = portfolio_mod.build_fsfl_portfolio(
            inst, epsilon=args.epsilon, settings=settings, oracle=args.oracle
        )
    else:
        from .model import evaluate_objective_rows, subsidy_of

        frontier = bruteforce.cached_frontier(inst)
        cls = portfolio_mod.topl_interp_class(inst.n_groups)

        def call(lam):
            ell = int(round(inst.n_groups - lam))
            vals = evaluate_objective_rows(TopL(ell), frontier.H)
            i = int(np.argmin(vals))
            sol = bruteforce._solution_from_assignment(inst, frontier.assignments[i])
            return sol, frontier.H[i]

        port = portfolio_mod.build_interp_portfolio(
            call, cls, args.epsilon, beta=1.0, N=max(inst.n_groups, 2),
            entry_meta=lambda sol: {"subsidy": subsidy_of(inst, sol)},
        )
    doc = documents.portfolio_to_doc(inst, port, args.epsilon)
    _emit(doc, args.out)
    return 0


def cmd_gen(args) -> int:
    if args.family == "random":
        inst = instances.gen_random(
            args.seed,
            n_clients=args.clients,
            n_facilities=args.facilities,
            n_groups=args.groups,
            delta=args.delta,
        )
    elif args.family == "hardness":
        inst = instances.gen_hardness_instance([float(v) for v in args.set.split(",")])
    elif args.family == "fsfl-lb":
        inst = instances.gen_fsfl_lower_bound(args.alpha, args.t)
    elif args.family == "state":
        records, sites = geo.gen_synthetic_state(
            seed=args.seed, n_blockgroups=args.count, n_districts=args.districts
        )
        os.makedirs(args.out_dir, exist_ok=True)
        geo.write_blockgroups_csv(records, os.path.join(args.out_dir, "blockgroups.csv"))
        geo.write_sites_csv(sites, os.path.join(args.out_dir, "sites.csv"))
        print(os.path.join(args.out_dir, "blockgroups.csv"))
        print(os.path.join(args.out_dir, "sites.csv"))
        return 0
    elif args.family == "geo":
        records = geo.read_blockgroups_csv(args.blockgroups)
        sites = geo.read_sites_csv(args.sites)
        inst = geo.build_geo_instance(records, sites, geo.GeoParams(delta=args.delta))
    else:
        raise ModelError(f"unknown family {args.family!r}")
    report = validate_instance(inst)
    if not report.ok:
        for v in report.violations:
            print(f"invalid instance: {v.message}", file=sys.stderr)
        return 2
    if args.out:
        instances.save_instance(inst, args.out)
        print(args.out)
    else:
        _emit(instances.instance_to_doc(inst), None)
    return 0


def cmd_deserts(args) -> int:
    records = geo.read_blockgroups_csv(args.blockgroups)
    sites = geo.read_sites_csv(args.sites)
    rule = geo.DesertRule(
        poverty_threshold=args.poverty_threshold,
        urban_radius_miles=args.urban_radius,
        rural_radius_miles=args.rural_radius,
    )
    rep = geo.medical_deserts(records, sites, rule)
    doc = {
        "total": rep.total,
        "verdicts": {r.id: bool(v) for r, v in zip(records, rep.verdicts)},
        "by_group": [
            {"urban": k[0], "district": k[1], "count": v}
            for k, v in sorted(rep.by_group.items())
        ],
    }
    _emit(doc, args.out)
    return 0


def cmd_report(args) -> int:
    doc = documents.read_json(args.portfolio)
    instances.check_schema(doc, documents.PORTFOLIO_SCHEMA)
    labels = None
    if args.instance:
        inst = instances.load_instance(args.instance)
        labels = documents.group_labels(inst)
    print(documents.render_report(doc, labels))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cache = args.cache or os.environ.get("CACHE_DIR", "./sitefolio-cache")
    port = args.port or int(os.environ.get("PORT", "8080"))
    app = create_app(cache_dir=cache, workers=args.workers)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sitefolio")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_solver_flags(p):
        p.add_argument("--fw-gap", dest="fw_gap", type=float, default=None)
        p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
        p.add_argument("--engine", choices=["auto", "simplex", "highs"], default=None)
        p.add_argument("--bisection-steps", dest="bisection_steps", type=int, default=None)
        p.add_argument("--epigraph-threshold", dest="epigraph_threshold", type=float, default=None)

    p = sub.add_parser("solve", help="one objective, pipeline or exact")
    p.add_argument("instance")
    p.add_argument("--objective", required=True)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--dump-lp", dest="dump_lp", default=None)
    add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact", help="exhaustive solve (alias for solve --exact)")
    p.add_argument("instance")
    p.add_argument("--objective", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=lambda a: cmd_solve(_with(a, exact=True, dump_lp=None)))

    p = sub.add_parser("portfolio", help="build a portfolio of solutions")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--class", dest="cls", choices=["lp", "topl"], default="lp")
    p.add_argument("--oracle", choices=["pipeline", "exact"], default="pipeline")
    p.add_argument("--out", default=None)
    add_solver_flags(p)
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("gen", help="generate an instance or synthetic state")
    p.add_argument("family", choices=["random", "hardness", "fsfl-lb", "state", "geo"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clients", type=int, default=8)
    p.add_argument("--facilities", type=int, default=3)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--set", default="1,2,3")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--t", type=int, default=18)
    p.add_argument("--count", type=int, default=300)  # blockgroups for `state`
    p.add_argument("--blockgroups", default=None)  # CSV path for `geo`
    p.add_argument("--sites", default=None)
    p.add_argument("--districts", type=int, default=4)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("deserts", help="desert verdicts for blockgroups + sites")
    p.add_argument("blockgroups")
    p.add_argument("sites")
    p.add_argument("--poverty-threshold", type=float, default=0.20)
    p.add_argument("--urban-radius", type=float, default=2.0)
    p.add_argument("--rural-radius", type=float, default=10.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_deserts)

    p = sub.add_parser("report", help="percent-reduction and desert tables")
    p.add_argument("portfolio")
    p.add_argument("--instance", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--cache", default=None)
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=cmd_serve)
    return ap


def _with(args, **kw):
    for k, v in kw.items():
        setattr(args, k, v)
    return args


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InstanceInfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 3
    except (ModelError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
