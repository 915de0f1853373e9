import json
import math

import numpy as np
import pytest

from utilityforge import cli
from utilityforge import utility as ut

MARKET = {"model": "black-scholes", "mu": 0.08, "sigma": 0.2, "r": 0.03, "T": 1.0}


@pytest.fixture
def market_file(tmp_path):
    path = tmp_path / "bs.json"
    path.write_text(json.dumps(MARKET))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


def test_dara_test_lognormal(capsys, market_file):
    code, rep = run(capsys, "dara-test", "--target", "lognormal", "--M", "0", "--Sigma", "0.2",
                    "--market", market_file)
    assert code == 0
    assert rep["outputs"]["is_dara"] is True
    assert rep["schema_version"] == 1 and rep["command"] == "dara-test"


def test_price_constant(capsys, market_file):
    code, rep = run(capsys, "price", "--payoff", "constant:5", "--market", market_file, "--tol", "1e-13")
    assert code == 0
    assert rep["outputs"]["cost"] == pytest.approx(5 * math.exp(-0.03), rel=1e-12)


def test_infer_utility_cara_fit(capsys, market_file):
    code, rep = run(capsys, "infer-utility", "--target", "normal", "--M", "1", "--Sigma", "0.3",
                    "--market", market_file, "--fit", "cara")
    assert code == 0
    fit = rep["outputs"]["fit"]
    assert fit["residual"] <= 1e-6
    assert fit["family"]["params"]["gamma"] == pytest.approx(0.25 / 0.3)


def test_generalized_routing_warning(capsys, market_file):
    code, rep = run(capsys, "infer-utility", "--target", "capital-guarantee", "--G", "0.9", "--M", "0.05",
                    "--s", "0.2", "--market", market_file)
    assert code == 0
    assert rep["outputs"]["generalized"] is True
    assert any("generalized" in w for w in rep["warnings"])


def test_inline_market_and_flags_agree(capsys):
    _, a = run(capsys, "price", "--target", "exponential", "--lam", "1", "--market", json.dumps(MARKET))
    _, b = run(capsys, "price", "--target", "exponential", "--lam", "1",
               "--mu", "0.08", "--sigma", "0.2", "--r", "0.03", "--T", "1")
    assert a["outputs"] == b["outputs"]


def test_validate_ok(capsys, market_file):
    code, rep = run(capsys, "validate", "--config", market_file)
    assert code == 0 and rep["outputs"]["ok"]


def test_validate_bad_sigma(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dict(MARKET, sigma=-0.1)))
    code, rep = run(capsys, "validate", "--config", str(path))
    assert code == 2
    assert rep["field"] == "sigma"


def test_validate_unknown_family(capsys, tmp_path):
    path = tmp_path / "law.json"
    path.write_text(json.dumps({"family": "weibull", "params": {}}))
    code, rep = run(capsys, "validate", "--config", str(path))
    assert code == 2
    assert "lognormal" in rep["message"] and "pareto" in rep["message"]


def test_validate_reports_json_position(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "mu": 0.08,\n  "sigma": \n}')
    code, rep = run(capsys, "validate", "--config", str(path))
    assert code == 2 and "line 4" in rep["message"]


def test_engine_error_exit_code(capsys, market_file):
    code, rep = run(capsys, "price", "--target", "pareto", "--m", "1", "--alpha", "0.5", "--market", market_file)
    assert code == 1
    assert rep["error"] == "unpriced_tail"


def test_curve_csv_deterministic(capsys, tmp_path, market_file):
    outs = []
    for i in range(2):
        path = tmp_path / f"curve{i}.csv"
        code, rep = run(capsys, "infer-utility", "--target", "lognormal", "--M", "0.05", "--Sigma", "0.2",
                        "--market", market_file, "--output", str(path))
        assert code == 0 and rep["files"] == [str(path)]
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_curve_csv_round_trip(capsys, tmp_path, market_file):
    path = tmp_path / "curve.csv"
    run(capsys, "infer-utility", "--target", "exponential", "--lam", "1", "--market", market_file,
        "--output", str(path))
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    back = ut.curve_from_csv(str(path))
    assert np.max(np.abs(back.marginal(rows[:, 0]) - rows[:, 2])) <= 1e-9


def test_risk_aversion_csv_stdout(capsys, market_file):
    code, out = run(capsys, "risk-aversion", "--target", "normal", "--M", "1", "--Sigma", "0.3",
                    "--market", market_file, "--format", "csv", "--grid-size", "11")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "x,p,ara,rra" and len(lines) == 12
    ara = [float(line.split(",")[2]) for line in lines[1:]]
    assert np.allclose(ara, 0.25 / 0.3, atol=1e-12)


def test_optimal_payoff_yaari(capsys, market_file):
    code, rep = run(capsys, "optimal-payoff", "--utility", "yaari-piecewise",
                    "--utility-params", '{"c": 1.0, "B": 2.0691638}', "--budget", "1",
                    "--market", market_file, "--grid-size", "5")
    assert code == 0
    assert rep["outputs"]["cost"] == pytest.approx(1.0, abs=1e-6)
    assert rep["warnings"]


def test_rationalize_discrete(capsys, tmp_path):
    path = tmp_path / "disc.json"
    path.write_text(json.dumps({"N": 3, "xi": [1.5, 1.0, 0.5], "xstar": [0.0, 1.0, 3.0]}))
    code, rep = run(capsys, "rationalize-discrete", "--input", str(path), "--trials", "500")
    assert code == 0
    for kind in ("paper-step", "peleg-yaari"):
        assert rep["outputs"]["verification"][kind]["ok"]


def test_audit_put(capsys, market_file):
    code, rep = run(capsys, "audit", "--payoff", "put:1", "--market", market_file)
    assert code == 0
    assert rep["outputs"]["report"]["is_efficient"] is False


def test_infinite_values_are_tagged(capsys, market_file):
    code, rep = run(capsys, "infer-generalized", "--target", "pointmass", "--k", "2", "--market", market_file)
    assert code == 0
    assert rep["outputs"]["curve"]["b"] == 2.0
