import json
import os

import numpy as np
import pytest

from sitefolio.cli import main, parse_objective
from sitefolio.instances import gen_random, save_instance

def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_objective():
    assert parse_objective("lp:2").p == 2.0
    assert parse_objective("lp:inf").is_max
    assert parse_objective("topl:3").ell == 3
    assert np.allclose(parse_objective("conic:1,0.5").lam, [1.0, 0.5])


def test_gen_hardness_then_exact_solve(tmp_path, capsys):
    inst_path = tmp_path / "hard.json"
    code, out, err = run(capsys, "gen", "hardness", "--set", "1,2,3", "--out", str(inst_path))
    assert code == 0 and inst_path.exists()
    sol_path = tmp_path / "sol.json"
    code, out, err = run(
        capsys, "solve", str(inst_path), "--objective", "lp:1", "--exact",
        "--out", str(sol_path),
    )
    assert code == 0
    doc = json.loads(sol_path.read_text())
    assert doc["meta"]["exact"] and doc["meta"]["certified"]
    assert set(doc["open"]) == {"f1", "f2"}  # the equal-sum partition verdict
    assert doc["value"] == pytest.approx(3.0)


def test_portfolio_topl_class(tmp_path, capsys):
    inst = gen_random(6, n_clients=7, n_facilities=3, n_groups=4, delta=0.5,
                      cost_range=(1.0, 2.5), revenue_range=(0.15, 0.6))
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    out_path = tmp_path / "p.json"
    code, out, err = run(
        capsys, "portfolio", str(path), "--epsilon", "0.25", "--class", "topl",
        "--out", str(out_path),
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert 1 <= len(doc["entries"]) <= 7
    assert doc["entries"][0]["label"].startswith("top-")


def test_gen_fsfl_lower_bound_family(tmp_path, capsys):
    out_path = tmp_path / "lb.json"
    code, out, err = run(
        capsys, "gen", "fsfl-lb", "--alpha", "2", "--t", "18", "--out", str(out_path)
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert len(doc["clients"]) == 18
    assert doc["delta"] == 0.5


def test_portfolio_single_group_single_entry(tmp_path, capsys):
    inst = gen_random(2, n_clients=6, n_facilities=3, n_groups=1, delta=0.5)
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    out_path = tmp_path / "p.json"
    code, out, err = run(
        capsys, "portfolio", str(path), "--epsilon", "0.25", "--oracle", "exact",
        "--out", str(out_path),
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert len(doc["entries"]) == 1


def test_report_zero_rows_for_baseline_equal_entry(tmp_path, capsys):
    # a pre-opened-only instance: the pipeline cannot beat the baseline, so
    # the percent-reduction column is all zeros
    inst = gen_random(4, n_clients=6, n_facilities=2, n_groups=2, delta=0.5)
    inst = inst.with_flags(pre_opened=np.array([True, True]))
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    pf = tmp_path / "p.json"
    code, out, err = run(
        capsys, "portfolio", str(path), "--epsilon", "0.5", "--oracle", "exact",
        "--out", str(pf),
    )
    assert code == 0
    code, out, err = run(capsys, "report", str(pf))
    assert code == 0
    for line in out.splitlines():
        if line.startswith("group"):
            continue
        for token in line.split():
            if token.endswith("%"):
                assert abs(float(token[:-1])) < 1e-9


def test_gen_state_and_deserts(tmp_path, capsys):
    code, out, err = run(
        capsys, "gen", "state", "--seed", "3", "--count", "40",
        "--out-dir", str(tmp_path),
    )
    assert code == 0
    bpath = os.path.join(str(tmp_path), "blockgroups.csv")
    spath = os.path.join(str(tmp_path), "sites.csv")
    assert os.path.exists(bpath) and os.path.exists(spath)
    code, out, err = run(capsys, "deserts", bpath, spath)
    assert code == 0
    doc = json.loads(out)
    assert doc["total"] == sum(1 for v in doc["verdicts"].values() if v)


def test_gen_geo_instance(tmp_path, capsys):
    run(capsys, "gen", "state", "--seed", "3", "--count", "25", "--out-dir", str(tmp_path))
    out_path = tmp_path / "geo.json"
    code, out, err = run(
        capsys, "gen", "geo",
        "--blockgroups", os.path.join(str(tmp_path), "blockgroups.csv"),
        "--sites", os.path.join(str(tmp_path), "sites.csv"),
        "--delta", "0.02", "--out", str(out_path),
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    assert doc["metric"]["kind"] == "haversine_miles"
    assert "geo" in doc


def test_solve_pipeline_with_lp_dump(tmp_path, capsys):
    inst = gen_random(0, n_clients=5, n_facilities=2, n_groups=2, delta=0.5)
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    dump = tmp_path / "debug.lp"
    code, out, err = run(
        capsys, "solve", str(path), "--objective", "lp:2", "--dump-lp", str(dump)
    )
    assert code == 0
    assert "Minimize" in dump.read_text()
    doc = json.loads(out)
    assert doc["meta"]["stage_subsidies"]["integral_assignment"] <= 2 * 0.5 + doc["meta"]["theta"] + 1e-9


def test_exact_subcommand_alias(tmp_path, capsys):
    inst = gen_random(1, n_clients=5, n_facilities=2, n_groups=2, delta=0.6)
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    code, out, err = run(capsys, "exact", str(path), "--objective", "topl:2")
    assert code == 0
    assert json.loads(out)["meta"]["exact"]


def test_invalid_instance_nonzero_exit(tmp_path, capsys):
    bad = {"format": "sitefolio-instance", "version": 1, "delta": 0.5,
           "clients": [], "facilities": []}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    code, out, err = run(capsys, "solve", str(p), "--objective", "lp:1")
    assert code != 0
    assert "error" in err


def test_deterministic_outputs(tmp_path, capsys):
    inst = gen_random(5, n_clients=6, n_facilities=3, n_groups=2, delta=0.4)
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    run(capsys, "solve", str(path), "--objective", "lp:2", "--out", str(a))
    run(capsys, "solve", str(path), "--objective", "lp:2", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_infeasible_instance_exit_code(tmp_path, capsys):
    from conftest import line_instance

    inst = line_instance([0.0], [1.0], [1.0], [100.0], delta=1e-6)
    path = tmp_path / "i.json"
    save_instance(inst, str(path))
    code, out, err = run(capsys, "solve", str(path), "--objective", "lp:1")
    assert code == 3
    assert "infeasible" in err
