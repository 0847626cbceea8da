import csv
import io
import json
import math
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from bergman_dpp import cli
from bergman_dpp.harness import (REPORT_FIELDS, ConfigError, ConvergenceReport, ConvergenceRow, DegreeRule,
                                 ExperimentConfig, McConfig, emit_report, load_report, make_test_function,
                                 run_convergence_experiment, run_identity_suite, run_sampling)
from bergman_dpp.weights import AdmissibilityError

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.json"


@pytest.fixture(scope="module")
def smoke():
    return ExperimentConfig.load(SMOKE)


def test_config_round_trip():
    for path in (ROOT / "configs" / "default.json", SMOKE):
        cfg = ExperimentConfig.load(path)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig.load(ROOT / "configs" / "default.json") == ExperimentConfig()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(k_schedule=(4.0, 2.0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"schema": 2})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"resolution": [4, 4]})
    with pytest.raises(ConfigError):
        ExperimentConfig.load("/nonexistent/config.json")


def test_degree_rule_and_resolution():
    cfg = ExperimentConfig(degree_rule=DegreeRule(overrides={"8": 40}))
    assert cfg.degree(4.0) == 22 and cfg.degree(8.0) == 40
    assert cfg.resolution_for(22) == (64, 64)
    assert cfg.resolution_for(106) == (214, 214)


def test_test_function_presets():
    u = make_test_function({"kind": "bump", "center": [[0.1, -0.2]], "radius": 0.3, "amplitude": 0.5}, 1)
    assert u.support.center == (0.1 - 0.2j,) and u.params[2] == 0.5
    assert make_test_function({"kind": "zero"}, 2).is_zero
    with pytest.raises(ConfigError):
        make_test_function({"kind": "wavelet"}, 1)


def test_zero_test_function_rows(smoke):
    cfg = replace(smoke, test_function={"kind": "zero"})
    rep = run_convergence_experiment(cfg)
    assert all(r.lhs == 0.0 and r.rhs == 0.0 and r.gap == 0.0 for r in rep.rows)
    assert rep.all_valid


def test_inadmissible_aborts(smoke):
    cfg = replace(smoke, test_function={"kind": "bump", "center": [[0, 0]], "radius": 0.5, "hessian_norm": 3.0})
    with pytest.raises(AdmissibilityError):
        run_convergence_experiment(cfg)


def test_small_degree_row_flagged(smoke):
    cfg = replace(smoke, k_schedule=(8.0,), degree_rule=DegreeRule(overrides={"8": 8}))
    rep = run_convergence_experiment(cfg)
    assert rep.rows[0].tail_indicator > 1e-8
    assert not rep.rows[0].valid and not rep.all_valid


def test_signs_and_validity(smoke):
    rep = run_convergence_experiment(smoke)
    assert rep.all_valid
    for r in rep.rows:
        assert r.lhs <= 0 and r.rhs <= 0
        assert r.deriv_residual <= 1e-4
        assert r.gap == r.lhs - r.rhs
    assert rep.energy == pytest.approx(rep.energy_t_integral, rel=1e-10)


def _row(**kw):
    base = dict(k=4.0, D=22, N_D=23, lhs=-0.1 / 3, rhs=-math.pi / 1e3, gap=1 / 7, tail_indicator=1.234e-13,
                deriv_residual=5e-15, valid=True)
    base.update(kw)
    return ConvergenceRow(**base)


def test_empty_report_header_only():
    text = emit_report(ConvergenceReport(), None, "csv")
    assert text == ",".join(REPORT_FIELDS) + "\n"


def test_json_round_trip_bit_identical(tmp_path):
    rep = ConvergenceReport((_row(),), 0.25)
    path = tmp_path / "r.json"
    emit_report(rep, path, "json")
    row = json.loads(path.read_text())["rows"][0]
    assert list(row) == list(REPORT_FIELDS)
    for f in REPORT_FIELDS:
        assert row[f] == getattr(rep.rows[0], f)


def test_csv_and_json_agree():
    rep = ConvergenceReport((_row(), _row(k=8.0, valid=False)), 0.25)
    a = load_report(emit_report(rep, None, "csv"), "csv")
    b = load_report(emit_report(rep, None, "json"), "json")
    assert a == b
    fields = next(csv.reader(io.StringIO(emit_report(rep, None, "csv"))))
    assert tuple(fields) == REPORT_FIELDS


def test_seventeen_digits():
    text = emit_report(ConvergenceReport((_row(),)), None, "csv")
    lhs = text.splitlines()[1].split(",")[3]
    assert lhs == format(-0.1 / 3, ".17g")


def test_emit_io_error():
    with pytest.raises(OSError, match="/nonexistent"):
        emit_report(ConvergenceReport(), "/nonexistent/dir/r.csv", "csv")


def test_identity_suite_default_passes(smoke):
    rep = run_identity_suite(smoke)
    assert rep.all_passed, [c for c in rep.checks if not c.ok]
    assert {c.status for c in rep.checks} == {"pass"}


def test_identity_suite_fault_injection(smoke):
    cfg = replace(smoke, mc=McConfig(enabled=False))
    clean = run_identity_suite(cfg)
    faulty = run_identity_suite(cfg, fault="gram")
    assert faulty.by_name("gram_residual").status == "fail"
    for c in faulty.checks:
        if c.name != "gram_residual":
            assert c.status == clean.by_name(c.name).status


def test_identity_suite_mc_disabled(smoke):
    rep = run_identity_suite(replace(smoke, mc=McConfig(enabled=False)))
    mc = [c for c in rep.checks if c.name.startswith("mc_")]
    assert mc and all(c.status == "skipped" for c in mc)
    assert all(c.status == "pass" for c in rep.checks if not c.name.startswith("mc_"))
    assert rep.all_passed


def test_identity_report_formats(smoke):
    rep = run_identity_suite(replace(smoke, mc=McConfig(enabled=False)), only=["gram_residual"])
    assert rep.to_csv().splitlines()[0] == "check,status,residual,tolerance,detail"
    assert json.loads(rep.to_json())["checks"][0]["status"] == "pass"


def test_sampling_run(smoke):
    run = run_sampling(smoke, seed=3)
    assert run.valid and len(run.samples) == smoke.sample.n_samples
    assert all(len(s) == run.n_d for s in run.samples)


def test_cli_converge(tmp_path):
    out = tmp_path / "r.csv"
    code = cli.main(["converge", "--config", str(SMOKE), "--out", str(out), "--format", "csv", "--threads", "2"])
    assert code == 0
    assert out.read_text().splitlines()[0] == ",".join(REPORT_FIELDS)


def test_cli_converge_invalid_rows_exit_nonzero(tmp_path):
    cfg = json.loads(SMOKE.read_text())
    cfg["k_schedule"] = [8.0]
    cfg["degree_rule"]["overrides"] = {"8": 8}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["converge", "--config", str(path), "--out", str(tmp_path / "r.json"), "--format", "json"]) == 1


def test_cli_identities_and_fault(tmp_path):
    args = ["identities", "--config", str(SMOKE), "--no-mc", "--out", str(tmp_path / "i.csv")]
    assert cli.main(args) == 0
    assert cli.main(args + ["--inject-fault", "gram"]) == 1


def test_cli_sample(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["sample", "--config", str(SMOKE), "--seed", "7", "--out", str(out)]) == 0
    assert out.read_text().startswith("sample_id,re_z1,im_z1")
    assert cli.main(["sample", "--config", str(SMOKE), "--seed", "7", "--format", "json",
                     "--out", str(tmp_path / "s.json")]) == 0
    assert len(json.loads((tmp_path / "s.json").read_text())["samples"]) == 20


def test_cli_rejects_bad_flags():
    with pytest.raises(SystemExit):
        cli.main(["converge", "--format", "xml"])
    with pytest.raises(SystemExit):
        cli.main(["sample", "--seed", "-1"])
    with pytest.raises(SystemExit):
        cli.main(["converge", "--threads", "0"])
    assert cli.main(["converge", "--config", "/nonexistent.json"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bergman_dpp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("converge", "identities", "sample"):
        assert sub in res.stdout
