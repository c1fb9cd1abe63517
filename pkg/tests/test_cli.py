import json

import numpy as np
import pytest

from giicov import cli, selftest
from giicov.config import RunConfig, load_config
from giicov.dataio import read_panel_csv, read_sidecar
from giicov.mcharness import read_table


def _sim(tmp_path, name="d.csv", *extra):
    path = str(tmp_path / name)
    assert cli.main(["simulate", "--model", "model1", "--n", "150", "--seed", "5",
                     "--out", path, *extra]) == 0
    return path


def test_simulate_is_deterministic(tmp_path):
    a = _sim(tmp_path, "a.csv")
    b = _sim(tmp_path, "b.csv")
    assert open(a).read() == open(b).read()
    meta = read_sidecar(a)
    assert meta["seed"] == 5 and meta["theta0"] == [1.0, 0.4] and meta["model"] == "model1"


def test_simulate_model3_window(tmp_path):
    path = str(tmp_path / "m3.csv")
    assert cli.main(["simulate", "--model", "model3", "--n", "40", "--out", path]) == 0
    data = read_panel_csv(path)
    assert data.times == (3, 4, 5)
    assert len(open(path).read().splitlines()) == 1 + 40 * 3


def test_simulate_rejects_bad_theta(tmp_path, capsys):
    code = cli.main(["simulate", "--model", "model1", "--n", "10", "--theta0", "1,7",
                     "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_estimate_recovers_theta(tmp_path, capsys):
    data = _sim(tmp_path)
    out = str(tmp_path / "res.json")
    assert cli.main(["estimate", "--model", "model1", data, "--out", out]) == 0
    res = json.load(open(out))
    assert res["converged"]
    theta = np.array([res["theta"]["gamma"], res["theta"]["rho"]])
    assert np.max(np.abs(theta - [1.0, 0.4])) <= 0.15
    text = capsys.readouterr().out
    assert "ci95 low" in text and "gamma" in text


def test_estimate_gii1_bandwidth_in_metadata(tmp_path):
    data = _sim(tmp_path)
    out = str(tmp_path / "res.json")
    code = cli.main(["estimate", "--model", "model1", data, "--method", "gii1",
                     "--bandwidth", "0.08", "--start", "1,0.4", "--out", out])
    assert code == 0
    res = json.load(open(out))
    assert res["method"] == "gii1" and res["meta"]["bandwidth"] == 0.08


def test_estimate_nonconvergence_exit_code(tmp_path):
    data = _sim(tmp_path)
    code = cli.main(["estimate", "--model", "model1", data, "--start", "4,-0.9",
                     "--max-iter", "1", "--step-tol", "0"])
    assert code == 1


def test_malformed_row_names_line(tmp_path, capsys):
    data = _sim(tmp_path)
    lines = open(data).read().splitlines()
    lines[7] = lines[7].replace(",", ",oops,", 1)
    open(data, "w").write("\n".join(lines) + "\n")
    assert cli.main(["estimate", "--model", "model1", data]) == 3
    assert "line 8" in capsys.readouterr().err


def test_missing_data_file(tmp_path):
    assert cli.main(["estimate", "--model", "model1", str(tmp_path / "nope.csv")]) == 3


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[run]\nmodel = model1\nbandwith = 0.1\n")
    assert cli.main(["mc", "--config", str(cfg), "--n", "50"]) == 2
    assert "'bandwith'" in capsys.readouterr().err
    cfg.write_text("[run]\nmodel = model1\n[extra]\nx = 1\n")
    assert cli.main(["mc", "--config", str(cfg), "--n", "50"]) == 2
    cfg.write_text("[run]\nmodel = model1\nn = many\n")
    assert cli.main(["mc", "--config", str(cfg)]) == 2


def test_missing_required_setting(capsys):
    assert cli.main(["mc", "--n", "50"]) == 2
    assert "model" in capsys.readouterr().err


def test_full_flag_and_bundled_config():
    cfg = load_config(cli.bundled_config("table1_model1.cfg"))
    assert (cfg.model, cfg.n, cfg.R, cfg.replications) == ("model1", 200, 10, 500)
    assert cfg.methods == ("giicov",) and cfg.weight == "efficient"
    args = cli.build_parser().parse_args(
        ["mc", "--config", cli.bundled_config("table1_model1.cfg"), "--full"])
    design = cli._design(args, cli._config(args))
    assert design.replications == cli.FULL_REPLICATIONS == 1000
    args = cli.build_parser().parse_args(
        ["mc", "--config", cli.bundled_config("table1_model1.cfg")])
    assert cli._design(args, cli._config(args)).replications == 500


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[run]\nmodel = model1\nn = 300\nseed = 3\n")
    args = cli.build_parser().parse_args(["mc", "--config", str(cfg), "--n", "40"])
    c = cli._config(args)
    assert (c.n, c.seed, c.source) == (40, 3, str(cfg))


def test_run_config_schema():
    c = RunConfig().update({"theta0": "1, 0.5", "methods": "giicov, gii1", "R": "5"})
    assert c.theta0 == (1.0, 0.5) and c.methods == ("giicov", "gii1") and c.R == 5
    assert c.method_options("gii1") == {"variance": "ad", "max_iter": 200}
    assert c.method_options("giicov")["hessian"] == "gauss-newton"


def test_mc_and_compare(tmp_path, capsys):
    table = str(tmp_path / "t.csv")
    log = str(tmp_path / "log.jsonl")
    base = ["--model", "model1", "--n", "80", "--R", "3", "--replications", "2"]
    assert cli.main(["mc", *base, "--out", table, "--log", log]) == 0
    rows = read_table(table)
    assert [r["parameter"] for r in rows] == ["gamma", "rho"]
    assert len(open(log).read().splitlines()) == 2
    capsys.readouterr()
    assert cli.main(["compare", *base, "--methods", "giicov,nelder-mead"]) == 0
    out = capsys.readouterr().out
    assert "ratios relative to giicov" in out and "nelder-mead" in out
    assert cli.main(["compare", *base]) == 2


def test_selftest_passes(capsys):
    assert cli.main(["selftest", "--cases", "200"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7 and all(line.startswith("PASS") for line in lines)
    assert all("tol" in line for line in lines)


def test_selftest_catches_sign_error(monkeypatch, capsys):
    real = selftest.cov_transform

    def flipped(u, grid_theta, grid_star, segment=None):
        res = real(u, grid_theta, grid_star, segment)
        return type(res)(2 * np.asarray(grid_star)[..., 0] - res.u_new, res.weight, res.segment)

    monkeypatch.setattr(selftest, "cov_transform", flipped)
    assert cli.main(["selftest", "--cases", "200"]) == 1
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("FAIL")


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "giicov" in capsys.readouterr().out
