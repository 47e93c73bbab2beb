import json

import numpy as np

from lqrl.cli import main


def write_config(tmp_path, **cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_with_overrides(tmp_path, capsys):
    path = write_config(tmp_path, experiment="q-lq", seed=0, budget=2)
    out = tmp_path / "run"
    assert main(["run", path, "--seed", "3", "--experiment", "pg-lq", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["experiment"] == "pg-lq"
    assert len((out / "metrics.csv").read_text().splitlines()) == 3
    assert "pg-lq seed=3" in capsys.readouterr().out


def test_run_reports_config_errors(tmp_path, capsys):
    path = write_config(tmp_path, experiment="q-lq", params={"bogus": 1})
    assert main(["run", path]) != 0
    err = capsys.readouterr().err
    assert "params.bogus" in err and "error" in err
    assert main(["run", str(tmp_path / "missing.json")]) != 0


def test_demo_mdp(capsys):
    assert main(["demo", "mdp", "--samples", "500"]) == 0
    out = capsys.readouterr().out
    assert "4.4000" in out and out.count("1.0000") == 6


def test_arx_fit_from_csv(tmp_path, capsys):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(200)
    y = np.zeros(200)
    for t in range(1, 200):
        y[t] = 0.5 * y[t - 1] + u[t - 1]
    path = tmp_path / "yu.csv"
    np.savetxt(path, np.c_[y, u], delimiter=",", header="y,u", comments="")
    assert main(["arx", str(path), "--n", "1", "--m", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert abs(float(lines[0].split("=")[1]) + 0.5) < 1e-10
    assert abs(float(lines[1].split("=")[1]) - 1.0) < 1e-10
    assert main(["arx", str(path), "--n", "1", "--m", "1", "--rls"]) == 0


def test_arx_bad_csv(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n")
    assert main(["arx", str(path)]) != 0
    assert "expected 2 columns" in capsys.readouterr().err
