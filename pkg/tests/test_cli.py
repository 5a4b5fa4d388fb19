import json
import os

import numpy as np
import pytest
import yaml

from ringflux import cli
from ringflux.config import RunConfig, validate, validate_dict


def write_cfg(tmp_path, name, d):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(d))
    return str(path)


BASE = {
    "experiment": "moments",
    "model": {"b": 1.0, "gamma": 1.0, "alpha": 0.0, "kappa": 0.0, "a": 2.0,
              "n": 64, "beta": 1.0, "lam": 0.0},
    "ensemble_size": 400,
    "T": 0.1,
    "seed": 7,
}


def test_config_roundtrip():
    cfg = RunConfig.from_dict({**BASE, "output_dir": "x", "modes": [1, -1]})
    assert RunConfig.parse(cfg.serialize()) == cfg


def test_validate_rejects_bad_kappa():
    diags = validate_dict({**BASE, "model": {**BASE["model"], "kappa": -1.0}})
    assert any(d["level"] == "error" and "kappa must be >= 0" in d["message"]
               for d in diags)


def test_validate_warns_out_of_regime():
    diags = validate_dict({**BASE, "experiment": "ou_regime",
                           "model": {**BASE["model"], "kappa": 0.5, "alpha": 1.0}})
    assert any(d["level"] == "warning" and "kappa > 1" in d["message"] for d in diags)
    assert not any(d["level"] == "error" for d in diags)


def test_validate_ok_is_empty():
    assert validate_dict(dict(BASE)) == []


def test_validate_bg_requires_diffusive_scale():
    diags = validate_dict({**BASE, "experiment": "bg_test",
                           "model": {**BASE["model"], "a": 1.5, "alpha": 1.0}})
    assert any(d["level"] == "error" and "a=2" in d["message"] for d in diags)


def test_run_moments_end_to_end(tmp_path):
    out = str(tmp_path / "out")
    cfg = write_cfg(tmp_path, "m.yaml", {**BASE, "output_dir": out})
    rc = cli.main(["run", cfg])
    assert rc == 0
    res = json.load(open(os.path.join(out, "results.json")))
    assert res["pass"] is True
    rho = [c for c in res["checks"] if c["quantity"] == "rho closed vs quadrature"][0]
    assert rho["empirical"] == 1.0 and rho["pass"] is True
    tau2 = [c for c in res["checks"] if c["quantity"] == "tau2 closed vs quadrature"][0]
    assert tau2["empirical"] == 1.0
    prov = json.load(open(os.path.join(out, "provenance.json")))
    assert prov["final"] is True and prov["seed"] == 7
    assert os.path.exists(os.path.join(out, "moments.csv"))


def test_run_results_validate_against_schema(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    import ringflux

    out = str(tmp_path / "out")
    cfg = write_cfg(tmp_path, "m.yaml", {**BASE, "output_dir": out})
    assert cli.main(["run", cfg]) == 0
    schema = json.load(open(os.path.join(os.path.dirname(ringflux.__file__),
                                         "results.schema.json")))
    res = json.load(open(os.path.join(out, "results.json")))
    jsonschema.validate(res, schema)


def test_run_single_replica_yields_null_inference(tmp_path):
    out = str(tmp_path / "out1")
    cfg = write_cfg(tmp_path, "one.yaml",
                    {**BASE, "ensemble_size": 1, "output_dir": out})
    rc = cli.main(["run", cfg])
    assert rc == 0
    res = json.load(open(os.path.join(out, "results.json")))
    sampled = [c for c in res["checks"] if "sampled" in c["quantity"]]
    assert sampled and all(c["se"] is None and c["pass"] is None for c in sampled)


def test_run_deterministic_bitwise(tmp_path):
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    cfg_a = write_cfg(tmp_path, "a.yaml", {**BASE, "output_dir": out_a})
    cfg_b = write_cfg(tmp_path, "b.yaml", {**BASE, "output_dir": out_b})
    assert cli.main(["run", cfg_a]) == 0
    assert cli.main(["run", cfg_b]) == 0
    ra = open(os.path.join(out_a, "results.json"), "rb").read()
    rb = open(os.path.join(out_b, "results.json"), "rb").read()
    assert ra == rb
    ca = open(os.path.join(out_a, "moments.csv"), "rb").read()
    cb = open(os.path.join(out_b, "moments.csv"), "rb").read()
    assert ca == cb


def test_run_invalid_config_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "bad.yaml",
                    {**BASE, "model": {**BASE["model"], "kappa": -2.0}})
    assert cli.main(["run", cfg]) == 1


def test_validate_cli_exit_codes(tmp_path):
    good = write_cfg(tmp_path, "g.yaml", dict(BASE))
    bad = write_cfg(tmp_path, "b.yaml",
                    {**BASE, "model": {**BASE["model"], "beta": -1.0}})
    assert cli.main(["validate", good]) == 0
    assert cli.main(["validate", bad]) == 1


def test_report_aggregates_grid(tmp_path):
    out = str(tmp_path / "out")
    cfg = write_cfg(tmp_path, "m.yaml", {**BASE, "output_dir": out})
    assert cli.main(["run", cfg]) == 0
    grid = str(tmp_path / "grid.csv")
    assert cli.main(["report", out, "--output", grid]) == 0
    lines = open(grid).read().strip().splitlines()
    assert lines[0] == "kappa,a,experiment,pass,dir"
    assert "moments" in lines[1] and "True" in lines[1]


def test_failing_check_exit_code(tmp_path, monkeypatch):
    from ringflux import experiments

    def fake(cfg, outdir):
        chk = experiments.CheckReport("forced", 1.0, 0.0, 0.1, 10.0, False)
        return experiments._payload(cfg, [chk])

    monkeypatch.setitem(experiments.RUNNERS, "moments", fake)
    monkeypatch.setitem(cli.RUNNERS, "moments", fake)
    out = str(tmp_path / "out")
    cfg = write_cfg(tmp_path, "m.yaml", {**BASE, "output_dir": out})
    assert cli.main(["run", cfg]) == 3


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg, outdir):
        raise RuntimeError("mid-run failure")

    monkeypatch.setitem(cli.RUNNERS, "moments", boom)
    out = str(tmp_path / "out")
    cfg = write_cfg(tmp_path, "m.yaml", {**BASE, "output_dir": out})
    assert cli.main(["run", cfg]) == 2
    prov = json.load(open(os.path.join(out, "provenance.json")))
    assert prov["final"] is False and "mid-run failure" in prov["error"]
