import json

import numpy as np
import pytest

from wiener_inf.harness import (ConfigError, agreement_record, build_obstacle, default_output_dir,
                                emit_report, gallery_names, gallery_path, load_config,
                                measure_class, run_scenario, validate_report)
from wiener_inf.harness.cli import main

SMALL_BALL = {
    "name": "small_ball", "dimension": 3, "seed": 3, "expected_class": "irregular",
    "obstacle": {"kind": "ball", "params": [1.5]},
    "shells": {"n_min": 1, "n_max": 7, "n_paths": 2000},
    "forms": {"lambda_n_min": 1, "lambda_n_max": 6, "integral_k_min": 0, "integral_k_max": 7},
    "measure": {"routes": ["wos"], "point": [8.0, 0.0, 0.0], "n_paths": 4000},
}


def _toml(d):
    lines = []
    for k, v in d.items():
        if not isinstance(v, dict):
            lines.append(f"{k} = {json.dumps(v)}")
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append(f"[{k}]")
            lines += [f"{kk} = {json.dumps(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"


def _write(tmp_path, d, name="s.toml"):
    p = tmp_path / name
    p.write_text(_toml(d))
    return str(p)


def test_gallery_scenarios_load():
    names = gallery_names()
    assert {"ball", "full_space", "cylinder", "thin_ray", "thorn_05", "thorn_1",
            "dyadic_sqrt", "dyadic_const"} <= set(names)
    for n in names:
        cfg = load_config(gallery_path(n))
        assert cfg.dimension >= 3
        build_obstacle(cfg.obstacle, cfg.dimension)


@pytest.mark.parametrize("patch,msg", [
    ({"dimension": 2}, "dimension"),
    ({"obstacle": {"kind": "teapot"}}, "obstacle"),
    ({"agreement": {"tau0": 0.6, "tau1": 0.5}}, "tau0"),
    ({"measure": {"point": [1.0, 2.0]}}, "point"),
    ({"shells": {"n_min": 5, "n_max": 2}}, "n_max"),
    ({"shells": {"n_paths": 0}}, "n_paths"),
    ({"unknown_section": {}}, "unknown_section"),
])
def test_invalid_configs_rejected(patch, msg):
    d = dict(SMALL_BALL, **patch)
    with pytest.raises(ConfigError, match=msg):
        load_config(d)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("name = [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_defaults_filled():
    cfg = load_config({"name": "x", "dimension": 3, "obstacle": {"kind": "empty"}})
    assert cfg.agreement == {"tau0": 0.1, "tau1": 0.5, "flat_tol": 0.1}
    assert cfg.shells["method"] == "hitting_mc" and cfg.seed == 0


def test_dyadic_union_from_rule():
    s = build_obstacle({"kind": "dyadic_ball_union", "n_min": 2, "n_max": 4, "exponent": 0.5}, 3)
    assert [m.radius for m in s.members] == [2.0, 2.0**1.5, 4.0]


def test_output_dir_precedence(monkeypatch, tmp_path):
    cfg = load_config(SMALL_BALL)
    monkeypatch.setenv("WIENER_INF_OUT", str(tmp_path))
    assert default_output_dir(cfg) == tmp_path / "small_ball"
    assert default_output_dir(cfg, "/x") == type(tmp_path)("/x")


def test_measure_class_rules():
    assert measure_class(0.05, [0.3, 0.2, 0.1])["class"] == "regular"
    assert measure_class(0.05, [0.3, 0.3, 0.1])["class"] == "unclassified"
    assert measure_class(0.9, [0.92, 0.91])["class"] == "irregular"
    assert measure_class(0.9, [0.99, 0.5])["class"] == "unclassified"
    assert measure_class(0.3, [0.5, 0.4])["class"] == "unclassified"


def test_agreement_record():
    assert agreement_record("DivergesRegular", "regular")["result"] == "match"
    assert agreement_record("ConvergesIrregular", "regular")["result"] == "mismatch"
    assert agreement_record("Inconclusive", "regular")["result"] == "unclassified"
    assert agreement_record("DivergesRegular", "unclassified")["result"] == "unclassified"


@pytest.fixture(scope="module")
def small_report():
    return run_scenario(load_config(SMALL_BALL))


def test_small_ball_pipeline(small_report):
    r = small_report
    assert r.ok, r.stages
    assert r.verdict == "ConvergesIrregular"
    assert r.agreement["result"] == "match"
    assert r.forms["agreement"]["agree"]
    validate_report(json.loads(json.dumps(r.to_dict())))


def test_report_deterministic_except_timings(small_report, tmp_path):
    again = run_scenario(load_config(SMALL_BALL))
    pa = emit_report(small_report, tmp_path / "a")
    pb = emit_report(again, tmp_path / "b")
    da, db = (json.loads(p["report"].read_text()) for p in (pa, pb))
    da.pop("timings"), db.pop("timings")
    assert da == db
    for key in ("shells", "measures"):
        assert pa[key].read_bytes() == pb[key].read_bytes()


def test_bundle_contents(small_report, tmp_path):
    p = emit_report(small_report, tmp_path)
    shells = p["shells"].read_text().splitlines()
    assert shells[0].startswith("n,gamma,gamma_low,gamma_high,term")
    assert len(shells) == 1 + 7
    measures = p["measures"].read_text().splitlines()
    assert measures[0] == "route,point,R_or_m,value,ci_low,ci_high"
    assert measures[-1].startswith("wos,") and ",inf," in measures[-1]


def test_empty_shell_list_gives_header_only(tmp_path):
    r = run_scenario(load_config(SMALL_BALL), stages=("measure_wos",))
    p = emit_report(r, tmp_path)
    assert p["shells"].read_text() == (
        "n,gamma,gamma_low,gamma_high,term,term_low,term_high,"
        "partial_sum,partial_sum_low,partial_sum_high\n")


def test_stage_failure_is_captured(tmp_path):
    d = dict(SMALL_BALL, measure={"routes": ["wos"], "point": [0.5, 0.0, 0.0], "n_paths": 100})
    d["shells"] = {"n_min": 1, "n_max": 6, "n_paths": 500}
    r = run_scenario(load_config(d), stages=("shells", "verdict", "measure_wos", "agreement"))
    assert r.stages["shells"]["status"] == "ok"
    assert r.stages["measure_wos"]["status"] == "failed"
    assert r.agreement is None
    emit_report(r, tmp_path)


def test_cli_usage_errors(capsys, tmp_path):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["run", str(tmp_path / "nope.toml")]) == 1
    assert main(["capacity", "ball", "guess"]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_help_exits_zero():
    assert main(["--help"]) == 0


def test_cli_verdict_on_constant_terms(tmp_path, capsys):
    p = tmp_path / "ones.csv"
    p.write_text("n,term\n" + "".join(f"{n},1.0\n" for n in range(1, 11)))
    assert main(["verdict", str(p)]) == 0
    assert capsys.readouterr().out.strip() == "DivergesRegular"


def test_cli_verdict_from_shell_capacities(tmp_path, capsys):
    p = tmp_path / "shells.csv"
    p.write_text("n,gamma,ci_low,ci_high,method\n" +
                 "".join(f"{n},1.0,1.0,1.0,analytic\n" for n in range(1, 11)))
    assert main(["verdict", str(p)]) == 0
    assert capsys.readouterr().out.strip() == "ConvergesIrregular"


def test_cli_capacity_analytic(capsys):
    assert main(["capacity", "ball", "analytic", "--params", "2.0"]) == 0
    assert "capacity=2 " in capsys.readouterr().out


def test_cli_run_and_check(tmp_path, capsys):
    scen = _write(tmp_path, SMALL_BALL)
    assert main(["run", scen, "--out", str(tmp_path / "out"), "--check"]) == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert "agreement=match" in capsys.readouterr().out


def test_cli_mismatch_exit_code(tmp_path):
    # thresholds pushed up so the far-field measure 0.25 reads as "regular"
    d = dict(SMALL_BALL, measure={"routes": ["wos"], "point": [2.0, 0.0, 0.0], "n_paths": 4000},
             agreement={"tau0": 0.3, "tau1": 0.9})
    scen = _write(tmp_path, d)
    assert main(["crosscheck", scen]) == 2
    assert main(["run", scen, "--out", str(tmp_path / "o"), "--check"]) == 2


def test_cli_measure_route(tmp_path, capsys):
    scen = _write(tmp_path, SMALL_BALL)
    assert main(["measure", scen, "--route", "wos"]) == 0
    assert capsys.readouterr().out.startswith("wos: estimate=")


def test_cli_dump_grids(tmp_path):
    d = dict(SMALL_BALL, measure={"routes": ["pde"], "point": [3.0, 0.0, 0.0],
                                  "radii": [8.0, 16.0], "growth": 0.5})
    scen = _write(tmp_path, d)
    out = tmp_path / "g"
    main(["run", scen, "--out", str(out), "--dump-grids"])
    from wiener_inf.solver import GridFunction
    gf = GridFunction.from_binary(out / "pde_potential.grid")
    assert np.nanmax(gf.values) <= 1.0
