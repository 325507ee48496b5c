import json

import pytest
from click.testing import CliRunner

import main
from main import cli
from src.util.errors import NumericalError


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args], catch_exceptions=False)


def last_json(result):
    return json.loads(result.output.strip().splitlines()[-1])


@pytest.fixture
def synthetic(tmp_path):
    data = tmp_path / "data"
    result = invoke("synth", "-o", data, "-K", 2, "--stations", 3, "--days", 120, "--missing", 0.05, "--seed", 4)
    assert result.exit_code == 0, result.output
    (data / "priors.toml").write_text("[priors]\nzeta_precision = 0.1\nbeta_precision = 0.1\n")
    return data


def fit(data, output, *extra):
    return invoke(
        "fit",
        "--panel", data / "panel.csv",
        "--x", data / "x.csv",
        "--w", data / "w.csv",
        "-K", 2,
        "--iterations", 6,
        "--seed", 3,
        "--holdout", 20,
        "-o", output,
        "--config", data / "priors.toml",
        *extra,
    )


def test_synth_writes_inputs(synthetic):
    for name in ("panel.csv", "x.csv", "w.csv", "states.csv", "truth.json"):
        assert (synthetic / name).exists()
    states = (synthetic / "states.csv").read_text().splitlines()
    assert states[0] == "state" and states[1] == "1"
    assert len(states) == 121
    assert "NA" in (synthetic / "panel.csv").read_text()


def test_full_workflow(synthetic, tmp_path):
    out = tmp_path / "run"
    result = fit(synthetic, out)
    assert result.exit_code == 0, result.output
    assert (out / "store" / "manifest.json").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["draws"] == 6
    assert len(summary["states"]["most_probable"]) == 100
    assert (out / "state_seasonal_counts.csv").exists()

    result = invoke("score", "-o", out)
    assert result.exit_code == 0, result.output
    report = last_json(result)
    assert report["K"] == 2 and report["n_obs"] > 0
    assert report["pls"] is not None
    assert json.loads((out / "scores.json").read_text()) == report

    result = invoke("simulate", "-o", out, "--chains", 3)
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in (out / "simulations").iterdir()) == [
        "chain_0000.csv",
        "chain_0001.csv",
        "chain_0002.csv",
        "seasonal_summary.csv",
    ]

    result = invoke("forecast", "-o", out, "--chains", 2)
    assert result.exit_code == 0, result.output
    chain = (out / "forecasts" / "chain_0000.csv").read_text().splitlines()
    assert len(chain) == 21

    report_path = tmp_path / "diag.csv"
    result = invoke(
        "diagnose", "--observed", synthetic / "panel.csv", "--simulated", synthetic / "panel.csv", "-o", report_path
    )
    assert result.exit_code == 0, result.output
    assert report_path.read_text().splitlines()[0] == "station_a,station_b,log_odds_a,spearman_a,log_odds_b,spearman_b"


def test_reruns_are_byte_identical(synthetic, tmp_path):
    assert fit(synthetic, tmp_path / "a").exit_code == 0
    assert fit(synthetic, tmp_path / "b", "--threads", 2).exit_code == 0
    for name in ("zeta.csv", "lambda.csv", "states.csv", "imputed.csv", "loglik.csv"):
        assert (tmp_path / "a" / "store" / name).read_bytes() == (tmp_path / "b" / "store" / name).read_bytes()


def test_config_file_and_flag_precedence(synthetic, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(
        f'panel = "{synthetic / "panel.csv"}"\n[mcmc]\niterations = 50\nseed = 1\n[priors]\nzeta_precision = 0.1\n'
    )
    result = invoke("fit", "--config", config, "--iterations", 2, "-o", tmp_path / "out")
    assert result.exit_code == 0, result.output
    run = json.loads((tmp_path / "out" / "run.json").read_text())
    assert run["mcmc"]["iterations"] == 2
    assert run["mcmc"]["seed"] == 1


def test_missing_panel_is_configuration_error(tmp_path):
    result = invoke("fit", "-o", tmp_path / "out")
    assert result.exit_code == 1
    assert last_json(result)["error"] == "configuration"


def test_bad_input_reports_location(tmp_path):
    panel = tmp_path / "panel.csv"
    panel.write_text("a,b\n1,2\n3,-4\n")
    result = invoke("fit", "--panel", panel, "--iterations", 1, "-o", tmp_path / "out")
    assert result.exit_code == 1
    error = last_json(result)
    assert error["error"] == "input"
    assert error["details"]["row"] == 2 and error["details"]["column"] == "b"


def test_sampler_failure_names_its_phase(synthetic, tmp_path, monkeypatch):
    def failing(panel, covariates, config, priors=None, threads=1, on_sweep=None):
        on_sweep(1, config.burn_in, "burn-in")
        raise NumericalError("transition precision is singular", {"category": 1})

    monkeypatch.setattr(main, "run_chain", failing)
    result = fit(synthetic, tmp_path / "out", "--burn-in", 0.5)
    assert result.exit_code == 1
    error = last_json(result)
    assert error["error"] == "numerical"
    assert error["details"] == {"category": 1, "phase": "burn-in"}
    assert not (tmp_path / "out" / "store").exists()


def test_fit_needs_two_draws(synthetic, tmp_path):
    result = invoke("fit", "--panel", synthetic / "panel.csv", "--iterations", 1, "-o", tmp_path / "out")
    assert result.exit_code == 1
    assert last_json(result)["error"] == "configuration"


def test_mismatched_diagnostic_panels(tmp_path):
    (tmp_path / "a.csv").write_text("s1,s2\n1,0\n0,1\n")
    (tmp_path / "b.csv").write_text("s1,s2\n1,0\n0,1\n2,2\n")
    result = invoke("diagnose", "--observed", tmp_path / "a.csv", "--simulated", tmp_path / "b.csv")
    assert result.exit_code == 1
    assert last_json(result)["error"] == "input"


def test_usage_errors_exit_two(tmp_path):
    assert invoke("fit", "--iterations", "many").exit_code == 2
    assert invoke("score").exit_code == 2


def test_score_without_fit(tmp_path):
    result = invoke("score", "-o", tmp_path)
    assert result.exit_code == 1
    assert last_json(result)["error"] == "configuration"


def test_default_config_written(tmp_path):
    path = tmp_path / "defaults.json"
    assert invoke("config", "--path", path).exit_code == 0
    assert json.loads(path.read_text())["mcmc"]["iterations"] == 2000
