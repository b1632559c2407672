import csv
import json

import pytest

from dpem import cli

FAST = {
    "sampler": {"total_time": 30, "burn_in": 5, "spacing": 0.25, "chains": 2, "seed": 3},
    "extrapolation": {"horizon": 9},
    "curves": {"points": 7},
}


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)

    def make(extra=None, name="run.json"):
        cfg = json.loads(json.dumps(FAST))
        for k, v in (extra or {}).items():
            if isinstance(v, dict):
                cfg.setdefault(k, {}).update(v)
            else:
                cfg[k] = v
        cfg.setdefault("output_dir", str(tmp_path / "out"))
        p = tmp_path / name
        p.write_text(json.dumps(cfg))
        return p

    return make


def test_missing_dataset_names_path(config, capsys):
    assert cli.main(["fit", str(config({"data": {"path": "/no/such/file.csv"}}))]) == 2
    assert "/no/such/file.csv" in capsys.readouterr().err


@pytest.mark.parametrize("setting, field", [
    ("sampler.dt=-1", "sampler.dt"),
    ("knots.omega=1.5", "knots.omega"),
    ("sampler.method=\"hmc\"", "sampler.method"),
    ("sampler.chains=0", "sampler.chains"),
    ("drift.type=\"nope\"", "drift"),
    ("sampler.burn_in=100", "sampler.burn_in"),
])
def test_config_errors_name_field(config, capsys, setting, field):
    assert cli.main(["fit", str(config()), "--set", setting]) == 2
    assert field in capsys.readouterr().err


def test_unknown_field_rejected(config, capsys):
    assert cli.main(["fit", str(config({"sampler": {"speed": 2}}))]) == 2
    assert "sampler.speed" in capsys.readouterr().err


def test_malformed_data_is_exit_3(config, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,event\n1.0,2\n")
    assert cli.main(["fit", str(config({"data": {"path": str(bad)}}))]) == 3


def test_fit_twice_is_byte_identical(config, tmp_path):
    a = config({"output_dir": str(tmp_path / "a")}, "a.json")
    b = config({"output_dir": str(tmp_path / "b")}, "b.json")
    assert cli.main(["fit", str(a)]) == 0 and cli.main(["fit", str(b)]) == 0
    for f in ("draws.csv", "curves.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    meta = json.loads((tmp_path / "a" / "draws.csv").read_text().splitlines()[0][2:])
    assert meta["seed"] == 3 and len(meta["config_hash"]) == 16


def test_seed_changes_draws(config, tmp_path):
    a = config({"output_dir": str(tmp_path / "a")}, "a.json")
    assert cli.main(["fit", str(a)]) == 0
    assert cli.main(["fit", str(a), "--set", "sampler.seed=4", "--set", f"output_dir=\"{tmp_path / 'c'}\""]) == 0
    assert (tmp_path / "a" / "draws.csv").read_bytes() != (tmp_path / "c" / "draws.csv").read_bytes()


def test_summary_reproduces_stored_json(config, tmp_path):
    p = config()
    assert cli.main(["fit", str(p)]) == 0
    assert cli.main(["summary", str(p), "--out", str(tmp_path / "again.json")]) == 0
    assert (tmp_path / "again.json").read_bytes() == (tmp_path / "out" / "summary.json").read_bytes()


def test_draws_round_trip(config, tmp_path):
    p = config()
    assert cli.main(["fit", str(p)]) == 0
    d, meta = cli.read_draws(tmp_path / "out" / "draws.csv")
    cli.write_draws(tmp_path / "copy.csv", d, meta)
    assert (tmp_path / "copy.csv").read_bytes() == (tmp_path / "out" / "draws.csv").read_bytes()


def test_extrapolate_needs_upstream_draws(config, capsys):
    assert cli.main(["extrapolate", str(config())]) == 2
    assert "draws.csv" in capsys.readouterr().err


def test_extrapolate_and_loo_after_fit(config, tmp_path):
    p = config()
    assert cli.main(["fit", str(p)]) == 0
    assert cli.main(["extrapolate", str(p)]) == 0
    s = json.loads((tmp_path / "out" / "summary_extrapolated.json").read_text())
    assert s["horizon"] == 9.0 and "mean_survival_horizon" in s
    assert cli.main(["loo", str(p)]) == 0
    assert "elpd_loo" in json.loads((tmp_path / "out" / "loo.json").read_text())


def test_prior_sim_three_drifts(config, tmp_path):
    drifts = [{"type": "random_walk"}, {"type": "gaussian_langevin", "mean": -1.0, "var": 0.25},
              {"type": "gompertz", "psi": 0.2}]
    assert cli.main(["prior-sim", str(config({"prior_sim": {"drifts": drifts, "paths": 5}}))]) == 0
    files = sorted((tmp_path / "out").glob("prior_paths_*.csv"))
    assert len(files) == 3
    rows = list(csv.reader(files[0].read_text().splitlines()[1:]))
    assert rows[0] == ["path", "knot", "log_hazard"] and {r[0] for r in rows[1:]} == set("01234")


def test_loo_sweep_table(config, tmp_path):
    p = config({"loo": {"gammas": [2, 7]}, "sampler": {"chains": 1}})
    assert cli.main(["loo", str(p)]) == 0
    rows = list(csv.DictReader((tmp_path / "out" / "loo_sweep.csv").read_text().splitlines()[1:]))
    assert [float(r["gamma"]) for r in rows] == [2.0, 7.0]
    assert set(rows[0]) == {"gamma", "elpd", "se", "max_k", "n_bad_k"}


def test_output_dir_env_override(config, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["prior-sim", str(config())]) == 0
    assert list((tmp_path / "env").glob("prior_paths_*.csv"))
    assert not (tmp_path / "out").exists()


def test_rj_method_and_comparison(config, tmp_path):
    p = config({"sampler": {"rj_iterations": 600, "rj_burn_in": 100, "chains": 1}})
    assert cli.main(["fit", str(p), "--set", "sampler.method=\"rj\""]) == 0
    assert cli.main(["compare-rj", str(p)]) == 0
    res = json.loads((tmp_path / "out" / "compare_rj.json").read_text())
    assert res["max_z"] >= 0


def test_rj_rejects_covariates(config, capsys):
    p = config({"data": {"covariates": ["treated"]}, "sampler": {"method": "rj"}})
    assert cli.main(["fit", str(p)]) == 2
