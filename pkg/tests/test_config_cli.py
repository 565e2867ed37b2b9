import json
import math

import numpy as np
import pytest

from cyberalloc import cli
from cyberalloc.config import (
    bundled,
    case_study_config,
    config_from_dict,
    deductible_matrix,
    load_config,
    read_parameter_file,
    write_parameter_file,
)
from cyberalloc.errors import ConfigError
from cyberalloc.reports import millions


def tiny_config() -> dict:
    return {
        "name": "tiny",
        "cascade": {
            "threats": ["T1", "T2"],
            "vulnerabilities": ["V1", "V2"],
            "assets": ["A1"],
            "A": [[1, 0], [1, 1]],
            "B": [[1], [1]],
            "investment_menu": [
                {"control": "V1", "cost": 1, "theta_effective": 0.5},
                {"control": "V2", "cost": 2, "theta_effective": 0.3},
            ],
        },
        "parameters": {
            "loss_ceiling": 12,
            "severities": [
                {"threat": "T1", "vulnerability": "V1", "asset": "A1", "family": "lognormal", "q": 0.3, "params": [0.5, 0.6]},
                {"threat": "T2", "vulnerability": "V1", "asset": "A1", "family": "lognormal", "q": 0.5, "params": [0.0, 0.8]},
                {"threat": "T2", "vulnerability": "V2", "asset": "A1", "family": "weibull", "q": 0.3, "params": [0.8, 1.5]},
            ],
            "frequencies": [
                {"threat": "T1", "asset": "A1", "family": "poisson", "mean": 1.0},
                {"threat": "T2", "asset": "A1", "family": "negative_binomial", "size": 2.0, "mean": 0.5},
            ],
            "corporate_frequency": {"family": "poisson", "mean": 1.5},
            "threat_mixture": [0.6, 0.4],
        },
        "lattice": {"step": 1},
        "allocation": {"deductible": 3, "budget": None},
        "sensitivity_budgets": [2, None],
        "scenarios": [{"name": "pricey", "title": "Costly premiums", "overrides": {"alpha": 10}}],
        "synthetic": {"years": 30, "seed": 5, "industry_positive": {"T1/V1/A1": 200, "T2/V1/A1": 200, "T2/V2/A1": 200}},
    }


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config()))
    return path


def test_config_requires_exactly_one_source():
    data = tiny_config()
    data["incident_file"] = "x.csv"
    with pytest.raises(ConfigError, match="exactly one"):
        config_from_dict(data)
    data = tiny_config()
    del data["parameters"]
    with pytest.raises(ConfigError, match="exactly one"):
        config_from_dict(data)


@pytest.mark.parametrize("section,key", [(None, "colour"), ("lattice", "span"), ("allocation", "weight")])
def test_unknown_keys(section, key):
    data = tiny_config()
    (data if section is None else data[section])[key] = 1
    with pytest.raises(ConfigError, match=key):
        config_from_dict(data)


def test_unknown_scenario_key_is_named():
    data = tiny_config()
    data["scenarios"] = [{"name": "s", "overrides": {"gamma": 3}}]
    with pytest.raises(ConfigError, match="gamma"):
        config_from_dict(data)


def test_deductible_forms(case_config):
    c = case_config.cascade
    assert np.all(deductible_matrix(c, 1e5) == 1e5)
    assert np.all(np.isnan(deductible_matrix(c, None)))
    d = deductible_matrix(c, {"T1/A1": None, "T2/A2": 2e5})
    assert math.isnan(d[0, 0]) and d[1, 1] == 2e5 and d[0, 1] == 1e5
    with pytest.raises(ConfigError):
        deductible_matrix(c, [[1, 2, 3]])


def test_weights_by_label():
    data = tiny_config()
    data["allocation"]["weights"] = {"eta": 2, "eta_j": {"V2": 5}, "alpha_ik": {"T2/A1": 3}}
    w = config_from_dict(data).weight_set()
    assert w.eta_j.tolist() == [2.0, 5.0]
    assert w.alpha_ik.tolist() == [[1.0], [3.0]]


def test_extends_and_null_removal(tmp_path, tiny):
    child = tmp_path / "child.json"
    child.write_text(json.dumps({"extends": "tiny.json", "scenarios": None, "lattice": {"step": 2}}))
    cfg = load_config(child)
    assert cfg.scenarios == [] and cfg.step == 2.0


def test_bundled_fit_config_points_at_bundled_data():
    cfg = load_config(bundled("case_study_fit.json"))
    assert cfg.parameters is None
    assert cfg.incident_file == bundled("case_study_incidents.csv").resolve()


def test_parameter_file_round_trip_is_idempotent(tmp_path):
    cfg = case_study_config()
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    write_parameter_file(first, cfg.cascade_block, cfg.parameters)
    block, params = read_parameter_file(first)
    write_parameter_file(second, block, params)
    assert first.read_bytes() == second.read_bytes()
    for key, s in cfg.parameters.severities.items():
        assert params.severities[key] == s


def test_millions_half_even():
    assert millions(4_005_000) == "4.00"
    assert millions(4_015_000) == "4.02"
    assert millions(-1e-9) == "0.00"
    assert millions(float("nan")) == "-"


# ---------------------------------------------------------------------------
# command line


def run(*args):
    return cli.main([str(a) for a in args])


def test_allocate_and_assess(tmp_path, tiny):
    out = tmp_path / "out"
    assert run("allocate", "--config", tiny, "--out", out) == 0
    assert run("assess", "--config", tiny, "--out", out) == 0
    for stem in ("strategies", "assessment"):
        assert (out / f"{stem}.txt").exists() and (out / f"{stem}.tsv").exists()
    text = (out / "strategies.txt").read_text()
    assert "Best strategies" in text and "Full ranking" in text
    header = (out / "strategies.tsv").read_text().splitlines()[0]
    assert header.startswith("table\tgroup\trow")


def test_reports_are_deterministic(tmp_path, tiny):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("report", "--config", tiny, "--out", a) == 0
    assert run("report", "--config", tiny, "--out", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert {"assessment.txt", "strategies.txt", "sensitivity.txt"} <= set(names)
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sensitivity_columns(tmp_path, tiny):
    out = tmp_path / "out"
    assert run("sensitivity", "--config", tiny, "--out", out) == 0
    text = (out / "sensitivity.txt").read_text()
    assert "Benchmark" in text and "Costly premiums" in text
    assert "unlimited" in text and "budget 0.00M" in text
    header = (out / "sensitivity.tsv").read_text().splitlines()[0].split("\t")
    assert len(header) == 3 + 4


def test_unknown_scenario_on_command_line(tmp_path, tiny, capsys):
    assert run("sensitivity", "--config", tiny, "--out", tmp_path, "--scenario", "nope") == 2
    assert "nope" in capsys.readouterr().err


def test_budget_zero_only_inaction(tmp_path, tiny):
    out = tmp_path / "out"
    assert run("allocate", "--config", tiny, "--out", out, "--budget", "0") == 0
    assert "1 feasible" in (out / "strategies.txt").read_text()


def test_simulate_fit_assess_round_trip(tmp_path, tiny):
    out = tmp_path / "out"
    assert run("simulate", "--config", tiny, "--out", out) == 0
    incidents = out / "incidents.csv"
    assert incidents.exists()
    data = tiny_config()
    del data["parameters"]
    data["incident_file"] = str(incidents)
    data["loss_ceiling"] = None
    fit_cfg = tmp_path / "fit.json"
    fit_cfg.write_text(json.dumps(data))
    assert run("fit", "--config", fit_cfg, "--out", out) == 0
    assert (out / "fits.txt").exists()
    params = out / "parameters.json"
    # a parameter file feeds later stages unchanged
    data = tiny_config()
    del data["parameters"]
    del data["cascade"]
    data["parameter_file"] = str(params)
    use_cfg = tmp_path / "use.json"
    use_cfg.write_text(json.dumps(data))
    assert run("assess", "--config", use_cfg, "--out", tmp_path / "o2") == 0
    block, p = read_parameter_file(params)
    again = tmp_path / "again.json"
    write_parameter_file(again, block, p)
    assert again.read_bytes() == params.read_bytes()


def test_fit_rejects_bad_rows(tmp_path, tiny, capsys):
    inc = tmp_path / "inc.csv"
    rows = ["year,threat,vulnerability,asset,loss"] + [f"{2000 + i % 5},T1,V1,A1,{i + 1}" for i in range(20)]
    rows.append("2001,T9,V1,A1,4")
    inc.write_text("\n".join(rows) + "\n")
    data = tiny_config()
    del data["parameters"]
    data["incident_file"] = str(inc)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(data))
    assert run("fit", "--config", cfg, "--out", tmp_path / "o") == 3
    err = capsys.readouterr().err
    assert "inc.csv:22: rejected" in err and "T9" in err


def test_fit_empty_file(tmp_path, capsys):
    inc = tmp_path / "empty.csv"
    inc.write_text("")
    data = tiny_config()
    del data["parameters"]
    data["incident_file"] = str(inc)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(data))
    assert run("fit", "--config", cfg, "--out", tmp_path / "o") == 3
    assert "insufficient data" in capsys.readouterr().err


def test_exit_codes(tmp_path, tiny, capsys):
    assert run("allocate", "--config", tmp_path / "missing.json") == 2
    assert run("allocate", "--config", tiny, "--step", "0", "--out", tmp_path) == 2
    assert run("assess", "--config", tiny, "--step", "1e-7", "--out", tmp_path) == 4
    with pytest.raises(SystemExit):
        cli.main(["allocate", "--budget", "lots"])


def test_assess_on_case_study(tmp_path):
    out = tmp_path / "o"
    assert run("assess", "--out", out) == 0
    text = (out / "assessment.txt").read_text()
    assert text.count("Annual losses at theta") == 8
    assert "loss-free pairs: (T1, A2), (T2, A1)" in text
