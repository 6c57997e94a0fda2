import csv
import filecmp
import json
import os

import numpy as np
import pytest

from arrr._serde import read_matrix_csv, write_matrix_csv
from arrr.cli import main
from arrr.estimator import load_model, predict
from arrr.synth import SynthConfig, make_instance


def _write_json(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def _read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _sweep_cfg(**over):
    cfg = {
        "kind": "sweep",
        "synth": {"d1": 20, "d2": 8, "n": 25, "rank_m": 3, "eta": 0.5, "seed": 0},
        "grids": {"k1": [5], "k2": [2], "seeds": [0]},
    }
    cfg.update(over)
    return cfg


class TestFitPredictSynth:
    def test_full_round_trip(self, tmp_path):
        synth_dir = str(tmp_path / "data")
        assert main(["synth", "--d1", "12", "--d2", "6", "--n", "40",
                     "--rank", "2", "--eta", "0", "--seed", "3",
                     "--out", synth_dir]) == 0
        model_dir = str(tmp_path / "model")
        assert main(["fit", "--x", os.path.join(synth_dir, "x.csv"),
                     "--y", os.path.join(synth_dir, "y.csv"),
                     "--sigma", "1.0", "--k1", "12", "--k2", "2",
                     "--out", model_dir]) == 0
        pred_path = str(tmp_path / "pred.csv")
        assert main(["predict", "--model", model_dir,
                     "--x", os.path.join(synth_dir, "x.csv"),
                     "--out", pred_path]) == 0
        y_hat = read_matrix_csv(pred_path)
        y = read_matrix_csv(os.path.join(synth_dir, "y.csv"))
        # noiseless instance: the two-stage fit reproduces the responses
        np.testing.assert_allclose(y_hat, y, atol=1e-6)
        model = load_model(model_dir)
        np.testing.assert_allclose(
            y_hat, predict(model, read_matrix_csv(os.path.join(synth_dir, "x.csv"))))

    def test_synth_env_seed_override(self, tmp_path, monkeypatch):
        a = str(tmp_path / "a")
        monkeypatch.setenv("ARRR_SEED", "7")
        assert main(["synth", "--d1", "8", "--d2", "4", "--n", "10",
                     "--rank", "2", "--seed", "0", "--out", a]) == 0
        monkeypatch.delenv("ARRR_SEED")
        b = str(tmp_path / "b")
        assert main(["synth", "--d1", "8", "--d2", "4", "--n", "10",
                     "--rank", "2", "--seed", "7", "--out", b]) == 0
        np.testing.assert_array_equal(
            read_matrix_csv(os.path.join(a, "x.csv")),
            read_matrix_csv(os.path.join(b, "x.csv")))
        meta = json.loads((tmp_path / "a" / "meta.json").read_text())
        assert meta["seed"] == 7

    def test_fit_rejects_bad_sigma(self, tmp_path):
        x = tmp_path / "x.csv"
        write_matrix_csv(str(x), np.eye(3))
        assert main(["fit", "--x", str(x), "--y", str(x),
                     "--sigma", "huge", "--out", str(tmp_path / "m")]) == 2

    def test_predict_missing_model_is_config_error(self, tmp_path):
        x = tmp_path / "x.csv"
        write_matrix_csv(str(x), np.eye(3))
        out = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(tmp_path / "nope"),
                     "--x", str(x), "--out", str(out)]) == 2
        assert not out.exists()
        assert not (tmp_path / "error.json").exists()


class TestSweep:
    def test_single_cell_single_row(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg())
        out = str(tmp_path / "out")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        rows = _read_rows(os.path.join(out, "results.csv"))
        assert len(rows) == 1
        row = rows[0]
        assert row["method"] == "adaptive_rrr"
        assert row["k1"] == "5" and row["k2"] == "2" and row["seed"] == "0"
        meta = json.loads(open(os.path.join(out, "meta.json")).read())
        assert row["config_hash"] == meta["config_hash"]
        assert len(row["config_hash"]) == 12

    def test_rerun_byte_identical(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg(
            grids={"k1": [3, 5], "k2": [1, 2], "seeds": [0, 1]}))
        out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
        assert main(["sweep", "--config", cfg, "--out", out1]) == 0
        assert main(["sweep", "--config", cfg, "--out", out2]) == 0
        assert filecmp.cmp(os.path.join(out1, "results.csv"),
                           os.path.join(out2, "results.csv"), shallow=False)

    def test_parallel_jobs_identical_output(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg(
            grids={"k1": [3, 5], "k2": [1, 2], "seeds": [0, 1]}))
        seq, par = str(tmp_path / "seq"), str(tmp_path / "par")
        assert main(["sweep", "--config", cfg, "--out", seq]) == 0
        assert main(["sweep", "--config", cfg, "--out", par, "--jobs", "3"]) == 0
        assert filecmp.cmp(os.path.join(seq, "results.csv"),
                           os.path.join(par, "results.csv"), shallow=False)

    def test_row_order_lexicographic(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg(
            grids={"k1": [5, 3], "k2": [2, 1], "seeds": [1, 0]}))
        out = str(tmp_path / "out")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        rows = _read_rows(os.path.join(out, "results.csv"))
        keys = [(r["method"], float(r["eta"]), int(r["k1"]), int(r["k2"]),
                 int(r["seed"])) for r in rows]
        assert keys == sorted(keys)

    def test_env_seed_override(self, tmp_path, monkeypatch):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg())
        out = str(tmp_path / "out")
        monkeypatch.setenv("ARRR_SEED", "9")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        rows = _read_rows(os.path.join(out, "results.csv"))
        assert [r["seed"] for r in rows] == ["9"]

    def test_out_of_range_grid_rejected(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg(
            grids={"k1": [21], "k2": [2], "seeds": [0]}))
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestConfigErrors:
    def test_malformed_json_no_output(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(bad), "--out", str(out)]) == 2
        assert not out.exists()

    def test_kind_mismatch(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", _sweep_cfg())
        out = tmp_path / "out"
        assert main(["compare", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()

    def test_missing_section(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {"kind": "sweep"})
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestNumericalFailure:
    def test_no_gap_writes_error_json(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "compare",
            "synth": {"d1": 20, "d2": 8, "n": 25, "rank_m": 3, "eta": 0.5,
                      "seed": 0},
            "grids": {"eta": [0.5], "seeds": [0]},
            "fit": {"delta": 100.0},
        })
        out = tmp_path / "out"
        assert main(["compare", "--config", cfg, "--out", str(out)]) == 3
        err = json.loads((out / "error.json").read_text())
        assert err["error"] == "NoGapError"
        assert "message" in err

    def test_packing_infeasible_reports_cost(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "packing",
            "packing": {"d": 64, "rho": 0.0158, "sigma_eps": 1.0,
                        "n_samples": 100, "k_patterns": 1, "s_size": 2,
                        "seed": 0},
        })
        out = tmp_path / "out"
        assert main(["packing", "--config", cfg, "--out", str(out)]) == 3
        err = json.loads((out / "error.json").read_text())
        assert err["error"] == "PackingInfeasibleError"
        assert "achieved_cost" in err


class TestCompare:
    def test_adaptive_plus_baseline_rows(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "compare",
            "synth": {"d1": 30, "d2": 10, "n": 25, "rank_m": 3, "eta": 0.5,
                      "seed": 0},
            "grids": {"eta": [0.5], "seeds": [0]},
            "fit": {"delta": 1e-6},
            "baselines": [{"method": "ridge", "mu": [0.1, 1.0]}],
        })
        out = str(tmp_path / "out")
        assert main(["compare", "--config", cfg, "--out", out]) == 0
        rows = _read_rows(os.path.join(out, "results.csv"))
        methods = [r["method"] for r in rows]
        assert methods == ["adaptive_rrr", "ridge"]
        adaptive, ridge = rows
        # provenance sentinels: -1 marks a field the method does not use
        assert adaptive["mu"] == "-1" and adaptive["rank"] == "-1"
        assert ridge["k1"] == "-1" and ridge["k2"] == "-1"
        assert float(ridge["mu"]) in (0.1, 1.0)
        for row in rows:
            assert float(row["mse_out"]) >= 0.0
            assert -1.0 <= float(row["corr_out"]) <= 1.0


class TestRolling:
    def _panel(self, tmp_path):
        rng = np.random.default_rng(0)
        t, assets = 20, 3
        lines = ["date," + ",".join("A%d" % j for j in range(assets))]
        vals = rng.normal(size=(t, assets))
        for i in range(t):
            lines.append("2020-01-%02d," % (i + 1)
                         + ",".join("%.6f" % v for v in vals[i]))
        p = tmp_path / "panel.csv"
        p.write_text("\n".join(lines) + "\n")
        return str(p)

    def test_per_fold_and_glued_rows(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "rolling",
            "panel": self._panel(tmp_path),
            "features": {"lookbacks": [1], "horizon": 1},
            "splits": {"train_len": 8, "valid_len": 3, "test_len": 3,
                       "gap_len": 0},
            "fit": {"delta": [1e-8], "sigma_eps": "auto"},
            "baselines": [{"method": "ridge", "mu": [0.5]}],
        })
        out = str(tmp_path / "out")
        assert main(["rolling", "--config", cfg, "--out", out]) == 0
        rows = _read_rows(os.path.join(out, "results.csv"))
        by_method = {}
        for r in rows:
            by_method.setdefault(r["method"], []).append(r)
        assert set(by_method) == {"adaptive_rrr", "ridge"}
        n_folds = (19 - 14) // 3 + 1  # usable dates 19, span 14, advance 3
        for method, mrows in by_method.items():
            splits = [(int(r["fold"]), r["split"]) for r in mrows]
            assert splits.count((-1, "glued")) == 1
            assert len([s for s in splits if s[1] == "train"]) == n_folds
            assert len([s for s in splits if s[1] == "test"]) == n_folds
        glued = [r for r in rows if r["split"] == "glued"]
        for r in glued:
            assert int(r["n_obs"]) == 3 * n_folds

    def test_missing_panel_is_config_error(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "rolling",
            "panel": str(tmp_path / "missing.csv"),
            "features": {"lookbacks": [1], "horizon": 1},
            "splits": {"train_len": 4, "valid_len": 2, "test_len": 2},
        })
        assert main(["rolling", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestPacking:
    def test_report_schema_and_pass(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "packing",
            "packing": {"d": 64, "rho": 0.0158, "sigma_eps": 1.0,
                        "n_samples": 100, "k_patterns": 16, "s_size": 8,
                        "seed": 1},
        })
        out = tmp_path / "out"
        assert main(["packing", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        for key in ("params", "measured_constants", "min_pairwise_distance",
                    "max_overlap", "unitarity_residual", "pass"):
            assert key in report
        assert report["pass"] is True
        assert report["unitarity_residual"] <= 1e-10
        assert set(report["measured_constants"]) == {"c8", "c9"}


class TestAngles:
    def test_angle_grid_shape_and_determinism(self, tmp_path):
        cfg = _write_json(tmp_path, "cfg.json", {
            "kind": "angles",
            "synth": {"d1": 30, "omega": 2.0, "seed": 4},
            "n": 20,
            "top_k": 5,
        })
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        assert main(["angles", "--config", cfg, "--out", out1]) == 0
        assert main(["angles", "--config", cfg, "--out", out2]) == 0
        assert filecmp.cmp(os.path.join(out1, "results.csv"),
                           os.path.join(out2, "results.csv"), shallow=False)
        rows = _read_rows(os.path.join(out1, "results.csv"))
        assert len(rows) == 25
        for r in rows:
            assert 0.0 <= float(r["angle"]) <= np.pi / 2 + 1e-12
