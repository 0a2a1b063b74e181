"""End-to-end CLI behavior through in-process main(argv)."""

import json

import numpy as np
import pytest

from proxkit import backend, problems
from proxkit.cli import main
from proxkit.datagen import GenSpec
from proxkit.harness import RECORD_COLUMNS, RunConfig
from proxkit.models import StepSchedule


def small_config_dict():
    cfg = RunConfig(gen_spec=GenSpec("LeastSquares", m=30, n=4, seed=5),
                    models=("SGM", "Truncated"), schedule=StepSchedule(1.0, 0.6),
                    epsilon=0.05, k_max=300, trials=2, alpha_grid=(0.01, 1.0),
                    master_seed=99)
    return cfg.to_dict()


# -------------------------------------------------------------- parser plumbing

def test_version_exits_zero(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert "proxkit" in capsys.readouterr().out


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["trial", "--family", "Quadratic", "--model", "SGM"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1


# ------------------------------------------------------------------------ trial

def test_trial_reports_json(capsys):
    code = main(["trial", "--family", "LeastSquares", "--m", "40", "--n", "5",
                 "--seed", "3", "--model", "Truncated", "--alpha0", "1.0",
                 "--k-max", "300"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["family"] == "LeastSquares" and out["model"] == "Truncated"
    assert out["converged"] is True and out["diverged"] is False
    assert isinstance(out["hit_time"], int) and 1 <= out["hit_time"] <= 300
    assert abs(out["f_star"]) <= 1e-12
    assert out["wall_nanos"] > 0
    assert out["engine"] == ("numba" if backend.numba_enabled() else "python")
    assert "avg_gap" not in out


def test_trial_python_engine_and_average(capsys):
    code = main(["trial", "--family", "AbsoluteLoss", "--m", "40", "--n", "5",
                 "--seed", "3", "--model", "FullProx", "--k-max", "200",
                 "--engine", "python", "--track-average"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["engine"] == "python"
    assert "avg_gap" in out and np.isfinite(out["avg_gap"])


def test_trial_uncertifiable_epsilon_exits_two(capsys):
    code = main(["trial", "--family", "LeastSquares", "--m", "40", "--n", "5",
                 "--model", "SGM", "--epsilon", "1e-16", "--k-max", "10"])
    assert code == 2
    assert "not certified" in capsys.readouterr().err


# ------------------------------------------------------------------------ sweep

def test_sweep_writes_outputs_and_reruns_identically(tmp_path, capsys):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(small_config_dict()))
    out1 = tmp_path / "run1"
    code = main(["sweep", "--config", str(cfg_path), "--out", str(out1),
                 "--workers", "1", "--quiet"])
    assert code == 0
    assert "wrote 8 records" in capsys.readouterr().out
    records = (out1 / "records.csv").read_bytes()
    assert records.splitlines()[0].decode() == ",".join(RECORD_COLUMNS)
    assert len(records.splitlines()) == 1 + 8
    meta = json.loads((out1 / "metadata.json").read_text())
    assert meta["config"] == small_config_dict()
    assert set(meta) == {"config", "version", "started_at", "seeds", "engine"}

    # replay from the metadata file alone; artifacts must match byte for byte
    out2 = tmp_path / "run2"
    code = main(["sweep", "--config", str(out1 / "metadata.json"),
                 "--out", str(out2), "--workers", "1", "--quiet"])
    assert code == 0
    assert (out2 / "records.csv").read_bytes() == records
    assert (out2 / "summary.csv").read_bytes() == (out1 / "summary.csv").read_bytes()


def test_sweep_prints_summary_table(tmp_path, capsys):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(small_config_dict()))
    code = main(["sweep", "--config", str(cfg_path),
                 "--out", str(tmp_path / "run"), "--workers", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "family" in out and "median" in out
    assert out.count("LeastSquares") >= 4  # one table row per cell


def test_sweep_malformed_json_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"gen_spec": ')
    code = main(["sweep", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err
    assert "malformed JSON" in err and "line 1" in err


def test_sweep_invalid_config_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"models": ["SGM"]}))
    code = main(["sweep", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "bad config" in capsys.readouterr().err


def test_sweep_missing_config_exits_three(tmp_path, capsys):
    code = main(["sweep", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 3
    assert "i/o error" in capsys.readouterr().err


# ------------------------------------------------------------------- gen / demo

def test_gen_round_trips_dataset(tmp_path, capsys):
    out = tmp_path / "ls.txt"
    code = main(["gen", "--family", "LeastSquares", "--m", "25", "--n", "4",
                 "--sigma", "0.5", "--seed", "7", "--out", str(out)])
    assert code == 0
    assert str(out) in capsys.readouterr().out
    ds = problems.load_dataset(str(out))
    from proxkit import datagen
    fresh = datagen.generate(GenSpec("LeastSquares", m=25, n=4, sigma=0.5, seed=7))
    assert np.array_equal(ds.A, fresh.A) and np.array_equal(ds.b, fresh.b)
    # the snapshot stores samples only; the reference is recomputed on demand
    assert ds.f_star is None
    problems.ensure_reference(ds)
    assert abs(ds.f_star - fresh.f_star) <= 1e-12 * max(1.0, abs(fresh.f_star))


def test_gen_lazy_family_reports_deferred(tmp_path, capsys):
    code = main(["gen", "--family", "AbsoluteLoss", "--m", "25", "--n", "4",
                 "--sigma", "0.5", "--seed", "7",
                 "--out", str(tmp_path / "abs.txt")])
    assert code == 0
    assert "deferred" in capsys.readouterr().out


def test_gen_unwritable_path_exits_three(tmp_path, capsys):
    code = main(["gen", "--family", "LeastSquares", "--m", "10", "--n", "2",
                 "--out", str(tmp_path / "missing" / "x.txt")])
    assert code == 3
    assert "i/o error" in capsys.readouterr().err


def test_demo_divergence_output(capsys):
    code = main(["demo-divergence", "--steps", "4"])
    assert code == 0
    out = capsys.readouterr().out
    assert "x^4 / 4" in out and "doubles every step" in out
    assert "VIOLATED" not in out


# ---------------------------------------------------------------- verify / bench

def test_verify_fast_passes_and_writes_json(tmp_path, capsys):
    json_path = tmp_path / "checks.json"
    code = main(["verify", "--fast", "--json", str(json_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "all 6 checks passed" in out
    assert out.count("PASS") == 6 and "FAIL" not in out
    payload = json.loads(json_path.read_text())
    assert len(payload) == 6
    assert all(entry["pass"] for entry in payload)
    assert {"check", "pass", "measured", "threshold", "detail"} <= set(payload[0])


def test_bench_times_both_engines(capsys):
    code = main(["bench", "--k-max", "500", "--repeats", "1",
                 "--m", "60", "--n", "8"])
    assert code == 0
    out = capsys.readouterr().out
    assert "ns/step" in out
    if backend.numba_enabled():
        assert "speedup:" in out
