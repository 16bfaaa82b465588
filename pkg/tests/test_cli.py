import csv
import json

import numpy as np
import pytest

from rdro.cli import DUALITY_COLUMNS, main
from rdro.config import PRESETS, validate
from rdro.errors import ConfigurationError


def write(tmp_path, body, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body) if not isinstance(body, str) else body)
    return str(path)


def small_investment(**solver):
    return {"schema": 1, "problem": "investment",
            "instance": {"n": 8, "volatility": 0.5},
            "solver": {"epsilon": 0.01, "step_size": 20.0, "outer_tolerance": 1e-9,
                       "max_outer_iterations": 20000, "scaling_tolerance": 1e-10} | solver}


def test_preset_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--preset", "investment73", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["eta"] > 0
    # stored constrained value round-trips from the other three fields
    assert report["constrained_value"] == report["penalized_value"] - report["theta"] * report["eta"]
    assert report["config"]["problem"] == "investment"
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "objective", "residual"]
    assert len(rows) - 1 == report["iterations"]
    plan = np.loadtxt(out / "plan.csv", delimiter=",")
    x = np.loadtxt(out / "x_star.csv", delimiter=",")
    assert plan.shape == (50, 2) and x.shape == (50,)
    np.testing.assert_array_equal(plan, np.array(report["plan"]))
    assert "converged=True" in capsys.readouterr().out


def test_iteration_cap_exits_2(tmp_path):
    cfg = write(tmp_path, small_investment(theta=1.0, max_outer_iterations=3))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_conflicting_targets_name_both(tmp_path, capsys):
    cfg = write(tmp_path, small_investment(theta=1.0, eta_target=0.01))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "solver.theta" in err and "solver.eta_target" in err


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = write(tmp_path, '{"schema": 1,\n  "problem": }')
    assert main(["solve", "--config", cfg]) == 1
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("solver, field", [
    ({"theta": -1.0}, "solver.theta"),
    ({"theta": 1.0, "epsilon": 0.0}, "solver.epsilon"),
    ({"theta": 1.0, "direction": "sideways"}, "solver.direction"),
    ({"theta_grid": []}, "solver.theta_grid"),
    ({"theta_grid": [2.0, 1.0]}, "solver.theta_grid"),
    ({"theta": 1.0, "bogus": 3}, "bogus"),
])
def test_validation_names_the_field(solver, field):
    with pytest.raises(ConfigurationError, match=field):
        validate(small_investment(**solver))


def test_missing_config_and_unknown_preset(capsys):
    assert main(["solve"]) == 1
    assert main(["solve", "--preset", "nope"]) == 1
    assert "investment73" in capsys.readouterr().err


def test_seed_override():
    cfg = validate(small_investment(theta=1.0), env_seed="5")
    assert cfg.seed == 5
    with pytest.raises(ConfigurationError, match="RDRO_SEED"):
        validate(small_investment(theta=1.0), env_seed="x")


def test_single_point_sweep_matches_solve(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", write(tmp_path, small_investment(theta=1.5), "s.json"),
                 "--out", str(a)]) == 0
    assert main(["sweep", "--config", write(tmp_path, small_investment(theta_grid=[1.5]), "g.json"),
                 "--out", str(b)]) == 0
    report = json.loads((a / "report.json").read_text())
    with open(b / "duality.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == DUALITY_COLUMNS and len(rows) == 1
    assert abs(float(rows[0]["value_penalized"]) - report["penalized_value"]) <= 1e-10
    assert abs(float(rows[0]["eta"]) - report["eta"]) <= 1e-10


def test_sweep_rows_and_eta_order(tmp_path):
    cfg = write(tmp_path, small_investment(theta_grid=[0.25, 0.5, 1.0, 2.0]))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--threads", "2"]) == 0
    with open(tmp_path / "duality.csv") as fh:
        eta = [float(r["eta"]) for r in csv.DictReader(fh)]
    assert len(eta) == 4 and all(b <= a + 1e-9 for a, b in zip(eta, eta[1:]))


def test_sweep_needs_grid_and_solve_rejects_grid(tmp_path):
    assert main(["sweep", "--config", write(tmp_path, small_investment(theta=1.0))]) == 1
    assert main(["solve", "--config", write(tmp_path, small_investment(theta_grid=[1.0]))]) == 1


def test_constrained_target(tmp_path):
    cfg = write(tmp_path, small_investment(eta_target=0.01, theta_bracket=[0.1, 10.0]))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert abs(report["eta"] - 0.01) <= 1e-6


def test_other_problem_kinds_validate():
    validate({"schema": 1, "problem": "healthcare",
              "instance": {"max_demands": [1.0, 1.0], "capacity": 3.0, "coverage": 0.5},
              "solver": {"theta": 1.0}})
    validate({"schema": 1, "problem": "facility",
              "instance": {"random": {"facilities": 3, "customers": 4}},
              "solver": {"theta": 1.0}})
    validate({"schema": 1, "problem": "custom",
              "instance": {"utility": {"kind": "linear"}, "p": [0.5, 0.5], "nu0": [1.0],
                           "y_values": [1.0],
                           "decision_set": {"kind": "budget_orthant", "weights": [1, 1], "budget": 1}},
              "solver": {"theta": 1.0}})
    with pytest.raises(ConfigurationError, match="instance"):
        validate({"schema": 1, "problem": "healthcare", "instance": {}, "solver": {"theta": 1.0}})


def test_verify_suites(capsys):
    assert main(["verify", "projection"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["verify", "nope"]) == 1
    assert "inner-oracle" in capsys.readouterr().err


def test_presets_validate():
    for raw in PRESETS.values():
        validate(raw)
