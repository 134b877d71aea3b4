import json
import subprocess
import sys

import numpy as np
import pytest

from recurrent_ehr import fit_proposed, generate_cohort, scenario_preset
from recurrent_ehr.cli import main
from recurrent_ehr.simlab import VISIT_SPEC, Z_NAMES

SUBJECTS = "subject_id,censor_time,Z1\na,4.0,0.4\nb,3.5,-0.3\n"
VISITS = ("subject_id,time,kind,Z2\n"
          "a,1.0,event,0.0\n"
          "a,0.5,nonevent,1.0\n"
          "a,2.0,nonevent,0.0\n"
          "b,1.5,event,1.0\n"
          "b,0.7,nonevent,0.0\n"
          "b,2.5,nonevent,1.0\n")


@pytest.fixture
def fixture_files(tmp_path):
    s, v = tmp_path / "subjects.csv", tmp_path / "visits.csv"
    s.write_text(SUBJECTS)
    v.write_text(VISITS)
    return tmp_path, str(s), str(v)


def _config(path, **cfg):
    p = path / "config.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def _strip(doc):
    doc = dict(doc)
    doc.pop("timestamp")
    return doc


def test_fit_ppl_smoke(fixture_files):
    d, s, v = fixture_files
    cfg = _config(d, method="ppl", event_covariates=["Z2"],
                  kernel={"h": 3.0})
    out = d / "fit.json"
    assert main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["method"] == "ppl"
    assert list(doc["result"]["beta"]) == ["Z2"]
    assert doc["result"]["score_norm"] < 1e-8
    assert doc["version"] and doc["config"]["tau"] == 4.0
    assert doc["curves"]["baseline_cumulative"]["value"][0] == 0.0


def test_disjoint_overlap_is_usage_error(fixture_files, capsys):
    d, s, v = fixture_files
    cfg = _config(d, method="disjoint",
                  disjoint_partition={"z": ["Z1", "Z2"], "w": ["Z2"]})
    code = main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["exit_status"] == 2
    assert "Z2" in err["error"]["message"]


def test_validation_errors(fixture_files):
    d, s, v = fixture_files
    bad = [dict(method="ppl", event_covariates=["missing"]),
           dict(method="ppl", mystery=1),
           dict(method="disjoint"),
           dict(method="ppl", bootstrap_B=1),
           dict(method="ppl", kernel={"nu": 0.9}),
           dict(method="ppl", history_rules=[{"rule": "Baseline",
                                              "name": "Z1"}])]
    for cfg in bad:
        assert main(["fit", "--data-subjects", s, "--data-visits", v,
                     "--config", _config(d, **cfg)]) == 2, cfg
    assert main(["fit", "--data-subjects", s + "x", "--data-visits", v]) == 2


def test_fitting_error_exit_one(fixture_files, capsys):
    d, s, v = fixture_files
    cfg = _config(d, method="ppl", event_covariates=["Z2"])
    code = main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg, "--fixed-h", "0.01"])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ZeroDenominatorError"


def test_bootstrap_fail_fast(fixture_files, capsys):
    d, s, v = fixture_files
    cfg = _config(d, method="ppl", event_covariates=["Z2"])
    reps = d / "reps.csv"
    code = main(["bootstrap", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg, "--fixed-h", "0.01", "--bootstrap-B", "5",
                 "--replicates", str(reps)])
    assert code == 1 and not reps.exists()


@pytest.fixture(scope="module")
def sim_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", "II", "--n", "120", "--reps", "1",
                 "--seed", "9", "--methods", "ppl", "--dump-replicate", "0",
                 "--dump-prefix", str(d / "rep"), "--out",
                 str(d / "s.csv")]) == 0
    rules = [{"rule": "Baseline", "name": "Z1"},
             {"rule": "LastObserved", "name": "Z2", "fill": "Z2_0"},
             {"rule": "LastObserved", "name": "Z3", "fill": "Z3_0"}]
    cfg = _config(d, method="proposed", event_covariates=list(Z_NAMES),
                  history_rules=rules,
                  kernel={"zero_denominator_policy": "drop_term"})
    return d, str(d / "rep_subjects.csv"), str(d / "rep_visits.csv"), cfg


def test_round_trip_matches_in_process_fit(sim_files):
    d, s, v, cfg = sim_files
    out = d / "fit.json"
    assert main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg, "--out", str(out),
                 "--curves", str(d / "curves.csv")]) == 0
    doc = json.loads(out.read_text())
    config = scenario_preset("II", n=120, seed=9)
    direct = fit_proposed(generate_cohort(config, 0).cohort, VISIT_SPEC,
                          config.kernel, covariates=Z_NAMES)
    got = np.array([doc["result"]["beta"][k] for k in Z_NAMES])
    assert np.array_equal(got, direct.beta_hat)
    assert "baseline_visit_rate" in doc["curves"]
    assert (d / "curves.csv").read_text().startswith("curve,t,value\n")


def test_embedded_config_reproduces_document(sim_files):
    d, s, v, cfg = sim_files
    first = d / "a.json"
    assert main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg, "--out", str(first)]) == 0
    doc = json.loads(first.read_text())
    again_cfg = d / "embedded.json"
    again_cfg.write_text(json.dumps(doc["config"]))
    second = d / "b.json"
    assert main(["fit", "--data-subjects", s, "--data-visits", v,
                 "--config", str(again_cfg), "--out", str(second)]) == 0
    assert _strip(doc) == _strip(json.loads(second.read_text()))


def test_bootstrap_command(sim_files):
    d, s, v, cfg = sim_files
    docs = []
    for k, threads in enumerate(("1", "2")):
        out, reps = d / f"boot{k}.json", d / f"reps{k}.csv"
        assert main(["bootstrap", "--data-subjects", s, "--data-visits", v,
                     "--config", cfg, "--bootstrap-B", "2",
                     "--seed", "3", "--threads", threads, "--out", str(out),
                     "--replicates", str(reps)]) == 0
        assert len(reps.read_text().splitlines()) == 3
        docs.append(_strip(json.loads(out.read_text())))
    assert docs[0] == docs[1]
    assert docs[0]["bootstrap"]["B"] == 2


def test_bootstrap_needs_b(sim_files):
    d, s, v, cfg = sim_files
    assert main(["bootstrap", "--data-subjects", s, "--data-visits", v,
                 "--config", cfg]) == 2


def test_simulate_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"s{k}.csv"
        assert main(["simulate", "--scenario", "I", "--n", "50", "--reps", "5",
                     "--seed", "1", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0] == "scenario,method,coefficient,bias,se,see,cp,failures"
    assert len(lines) == 1 + 9


def test_simulate_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--scenario", "Nope"])
    assert info.value.code == 2
    assert main(["simulate", "--scenario", "I", "--reps", "0"]) == 2
    assert main(["simulate", "--scenario", "I", "--reps", "1",
                 "--methods", "disjoint"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "recurrent_ehr", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "recurrent-ehr" in res.stdout
