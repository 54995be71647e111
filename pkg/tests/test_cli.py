import csv
import json

import numpy as np
import pytest

from pencap.calibration import save_parameters
from pencap.cli import main
from pencap.mortality import PiecewiseLinearBasis, survival_probability
from pencap.scenarios import EconomyParams


def _riskless_params_file(path):
    """Zero dynamics, certain survival, unit returns, flat index."""
    params = EconomyParams(A=np.zeros((7, 7)), b=np.zeros(7), sigma=np.zeros((7, 7)))
    # enormous logits saturate survival; y = -1000 makes the yield vanish
    x0 = np.array([800.0, 800.0, 800.0, 10.0, -1000.0, 0.0, 0.0])
    save_parameters(path, params, x0, PiecewiseLinearBasis())
    return path


def _config(tmp_path, **overrides):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(overrides))
    return str(path)


def _read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def _write_synthetic_inputs(tmp_path):
    ages = np.arange(18, 101)
    v = np.array([7.0, 5.0, 1.2])
    mortality = tmp_path / "mortality.csv"
    with open(mortality, "w") as handle:
        handle.write("year,age,exposure,deaths\n")
        for k, year in enumerate(range(1995, 2008)):
            p = survival_probability(v + 0.01 * k, ages)
            deaths = 20000 - np.round(20000 * p).astype(int)
            for age, d in zip(ages, deaths):
                handle.write(f"{year},{age},20000,{d}\n")
    market = tmp_path / "market.csv"
    rng = np.random.default_rng(123)
    with open(market, "w") as handle:
        handle.write("year,bond_yield,equity_index,cpi,gdp_per_capita\n")
        yld, idx, cpi, gdp = 5.0, 100.0, 160.0, 30000.0
        for year in range(1994, 2008):
            handle.write(f"{year},{yld:.6f},{idx:.6f},{cpi:.6f},{gdp:.6f}\n")
            yld = max(0.5, yld * np.exp(rng.normal(0, 0.1)))
            idx *= np.exp(rng.normal(0.06, 0.15))
            cpi *= np.exp(rng.normal(0.02, 0.01))
            gdp *= np.exp(rng.normal(0.02, 0.02))
    return str(mortality), str(market)


class TestSolve:
    def test_riskless_annuity_all_methods(self, tmp_path):
        params_file = _riskless_params_file(tmp_path / "riskless.json")
        out = tmp_path / "table.csv"
        config = _config(
            tmp_path,
            params_file=str(params_file),
            scenarios=3,
            pool=1,
            modes=["deterministic", "binomial"],
        )
        assert main(["solve", "--config", config, "--out", str(out)]) == 0
        rows = _read_rows(out)
        assert len(rows) == 12  # 2 modes x 2 strategies x 3 risk kinds
        for row in rows:
            assert float(row["w0PerCapita"]) == pytest.approx(35.0, abs=1e-8)

    def test_columns_and_gamma_annotation(self, tmp_path):
        out = tmp_path / "out.csv"
        config = _config(tmp_path, scenarios=300, modes=["deterministic"])
        assert main(["solve", "--config", config, "--out", str(out)]) == 0
        rows = _read_rows(out)
        assert list(rows[0].keys()) == [
            "poolSize", "strategy", "riskKind", "gamma", "mode",
            "w0PerCapita", "stderr", "iterations",
        ]
        for row in rows:
            if row["riskKind"] == "entropic":
                assert float(row["gamma"]) == 0.05
                assert int(row["iterations"]) > 0
            else:
                assert row["gamma"] == ""

    def test_self_test_flag(self, tmp_path):
        out = tmp_path / "out.csv"
        config = _config(tmp_path, scenarios=500, modes=["deterministic"], risks=["neutral"])
        assert main(["solve", "--config", config, "--out", str(out), "--self-test"]) == 0

    def test_flags_override_config(self, tmp_path):
        out = tmp_path / "out.csv"
        config = _config(tmp_path, scenarios=200, gamma=0.4, modes=["deterministic"])
        assert main([
            "solve", "--config", config, "--out", str(out),
            "--gamma", "0.05", "--risk", "entropic", "--strategy", "safe",
        ]) == 0
        rows = _read_rows(out)
        assert len(rows) == 1
        assert float(rows[0]["gamma"]) == 0.05

    def test_unknown_config_key_is_input_error(self, tmp_path):
        config = _config(tmp_path, scenariios=100)
        assert main(["solve", "--config", config]) == 2

    def test_invalid_pool_grid_flag(self, tmp_path):
        assert main(["sweep", "--pool-grid", "10,abc"]) == 2

    def test_nonhomogeneous_flag(self, tmp_path):
        out = tmp_path / "out.csv"
        config = _config(tmp_path, scenarios=300, modes=["deterministic"], risks=["neutral"],
                         strategies=["safe"], pool=10)
        assert main(["solve", "--config", config, "--out", str(out), "--nonhomogeneous"]) == 0
        (row,) = _read_rows(out)
        assert row["poolSize"] == "10"
        # double benefits for 20% of members raise the per-capita value by 20%
        config_h = _config(tmp_path, scenarios=300, modes=["deterministic"], risks=["neutral"],
                           strategies=["safe"], pool=10)
        out_h = tmp_path / "hom.csv"
        assert main(["solve", "--config", config_h, "--out", str(out_h)]) == 0
        (row_h,) = _read_rows(out_h)
        ratio = float(row["w0PerCapita"]) / float(row_h["w0PerCapita"])
        assert ratio == pytest.approx(1.2, rel=1e-6)


class TestSweep:
    def test_reference_row_and_grid(self, tmp_path):
        out = tmp_path / "sweep.csv"
        config = _config(tmp_path, scenarios=400, strategies=["safe"], pool_grid=[1, 10])
        assert main(["sweep", "--config", config, "--out", str(out)]) == 0
        rows = _read_rows(out)
        assert [row["poolSize"] for row in rows] == ["0", "1", "10"]
        assert rows[0]["mode"] == "deterministic"
        assert all(row["mode"] == "binomial" for row in rows[1:])
        assert all(row["riskKind"] == "entropic" for row in rows)
        values = [float(row["w0PerCapita"]) for row in rows]
        assert values[1] >= values[2] >= values[0] - 2e-4

    def test_byte_identical_reruns_and_worker_invariance(self, tmp_path):
        config = _config(tmp_path, scenarios=250, strategies=["safe"], pool_grid=[1, 5])
        paths = [tmp_path / name for name in ("a.csv", "b.csv", "c.csv")]
        assert main(["sweep", "--config", config, "--out", str(paths[0])]) == 0
        assert main(["sweep", "--config", config, "--out", str(paths[1])]) == 0
        assert main(["sweep", "--config", config, "--out", str(paths[2]), "--workers", "3"]) == 0
        blobs = [p.read_bytes() for p in paths]
        assert blobs[0] == blobs[1] == blobs[2]

    def test_seed_changes_output(self, tmp_path):
        config = _config(tmp_path, scenarios=250, strategies=["safe"], pool_grid=[5])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sweep", "--config", config, "--out", str(a), "--seed", "1"]) == 0
        assert main(["sweep", "--config", config, "--out", str(b), "--seed", "2"]) == 0
        assert a.read_bytes() != b.read_bytes()


class TestCalibrate:
    def test_missing_file_is_input_error(self, tmp_path, capsys):
        assert main(["calibrate", str(tmp_path / "nope.csv"), str(tmp_path / "m.csv")]) == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_calibrate_then_solve(self, tmp_path):
        mortality, market = _write_synthetic_inputs(tmp_path)
        params_out = tmp_path / "fitted.json"
        code = main([
            "calibrate", mortality, market,
            "--out", str(params_out), "--pin", "b5=0.192",
        ])
        assert code == 0
        payload = json.loads(params_out.read_text())
        assert payload["b"][4] == 0.192
        assert len(payload["x0"]) == 7

        out = tmp_path / "solve.csv"
        config = _config(tmp_path, scenarios=200, modes=["deterministic"],
                         risks=["neutral"], strategies=["safe"])
        assert main([
            "solve", "--config", config, "--out", str(out),
            "--params-file", str(params_out),
        ]) == 0
        (row,) = _read_rows(out)
        assert np.isfinite(float(row["w0PerCapita"]))
