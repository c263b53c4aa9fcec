import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from lnp.cli import main
from lnp.data import load_csv


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.csv"
    code = main([
        "simulate", "--scenario", "II", "--n1", "25", "--n2", "25",
        "--seed", "7", "--out", str(path),
    ])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def fit_dir(small_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "run"
    code = main([
        "fit", "--data", str(small_data), "--out", str(out),
        "--iterations", "300", "--burn-in", "100", "--seed", "5",
    ])
    assert code == 0
    return out


class TestSimulate:
    def test_row_count(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["simulate", "--scenario", "II", "--n1", "100", "--n2", "100",
                     "--seed", "7", "--out", str(out)]) == 0
        data = load_csv(out)
        assert data.sample1.size + data.sample2.size == 200

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            main(["simulate", "--scenario", "I", "--n1", "30", "--n2", "20",
                  "--seed", "3", "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_scenario_exit_code(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--scenario", "IV", "--out", str(tmp_path / "x.csv")])
        assert err.value.code == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_iris(self, tmp_path):
        out = tmp_path / "iris.csv"
        assert main(["simulate", "--scenario", "iris", "--out", str(out)]) == 0
        data = load_csv(out)
        assert (data.sample1.size, data.sample2.size) == (90, 60)

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("LNP_SEED", "99")
        main(["simulate", "--scenario", "I", "--n1", "10", "--n2", "10",
              "--out", str(a)])
        monkeypatch.delenv("LNP_SEED")
        main(["simulate", "--scenario", "I", "--n1", "10", "--n2", "10",
              "--seed", "99", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestFit:
    def test_outputs_exist(self, fit_dir):
        for name in ("chain.csv", "density.csv", "summaries.json",
                     "density.png", "density_draws.npz"):
            assert (fit_dir / name).exists(), name

    def test_summaries_schema(self, fit_dir):
        payload = json.loads((fit_dir / "summaries.json").read_text())
        for key in ("K1", "K2", "K12", "map", "bayes_factor", "prior_odds",
                    "posterior_p_homogeneous", "manifest"):
            assert key in payload
        assert payload["manifest"]["seed"] == 5
        assert payload["manifest"]["config_hash"]
        assert sum(payload["K1"].values()) == pytest.approx(1.0, abs=1e-9)

    def test_config_hash_embedded_in_outputs(self, fit_dir):
        for name in ("chain.csv", "density.csv"):
            first = (fit_dir / name).read_text().splitlines()[0]
            assert first.startswith("# config-hash:")

    def test_determinism(self, small_data, tmp_path):
        outs = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub
            main(["fit", "--data", str(small_data), "--out", str(out),
                  "--iterations", "120", "--burn-in", "40", "--seed", "9",
                  "--no-plots"])
            outs.append((out / "chain.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_config_key_named(self, small_data, tmp_path, capsys):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"iterations": 50, "burn_in": 10}))
        code = main(["fit", "--data", str(small_data), "--out",
                     str(tmp_path / "o"), "--config", str(config)])
        assert code == 2
        assert "seed" in capsys.readouterr().err

    def test_unknown_config_key_named(self, small_data, tmp_path, capsys):
        config = tmp_path / "c.json"
        config.write_text(json.dumps(
            {"iterations": 50, "burn_in": 10, "seed": 1, "walrus": True}
        ))
        code = main(["fit", "--data", str(small_data), "--out",
                     str(tmp_path / "o"), "--config", str(config)])
        assert code == 2
        assert "walrus" in capsys.readouterr().err

    def test_config_file_with_flag_overrides(self, small_data, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"iterations": 80, "burn_in": 20, "seed": 4}))
        out = tmp_path / "o"
        code = main(["fit", "--data", str(small_data), "--out", str(out),
                     "--config", str(config), "--iterations", "100",
                     "--no-plots"])
        assert code == 0
        payload = json.loads((out / "summaries.json").read_text())
        assert payload["manifest"]["config"]["iterations"] == 100
        assert payload["manifest"]["n_retained"] == 80

    def test_missing_data_file_is_io_error(self, tmp_path):
        code = main(["fit", "--data", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o")])
        assert code == 4

    def test_multichain_pooling(self, small_data, tmp_path):
        out = tmp_path / "mc"
        code = main(["fit", "--data", str(small_data), "--out", str(out),
                     "--iterations", "60", "--burn-in", "20", "--seed", "2",
                     "--chains", "2", "--no-plots"])
        assert code == 0
        assert (out / "chain_00.csv").exists() and (out / "chain_01.csv").exists()
        payload = json.loads((out / "summaries.json").read_text())
        assert payload["manifest"]["n_retained"] == 80


class TestTestCommand:
    def test_report_and_exit_zero(self, small_data, tmp_path, capsys):
        code = main(["test", "--data", str(small_data), "--out",
                     str(tmp_path / "t"), "--iterations", "300",
                     "--burn-in", "100", "--seed", "5", "--no-plots"])
        assert code == 0
        text = capsys.readouterr().out
        assert "BF = " in text
        assert "P(I=1 | data)" in text
        assert "verdict:" in text
        # scenario II fixture at modest size: homogeneity rejected
        assert "reject homogeneity" in text
        assert "different distributions" in text


class TestPeppf:
    def test_normalize_stable(self, capsys):
        code = main(["peppf", "--family", "stable", "--sigma", "0.5",
                     "--sigma0", "0.5", "--gamma", "1.0",
                     "--normalize", "2", "2"])
        assert code == 0
        out = capsys.readouterr().out
        for line in out.strip().splitlines():
            total = float(line.rsplit("=", 1)[1])
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_evaluation_and_cross_difference(self, tmp_path, capsys):
        part = tmp_path / "p.json"
        part.write_text(json.dumps({"freq1": [2], "freq2": [1], "shared": [[1, 1]]}))
        code = main(["peppf", "--partition", str(part), "--family", "stable",
                     "--sigma", "0.4", "--sigma0", "0.6", "--gamma", "0.5"])
        assert code == 0
        out = capsys.readouterr().out
        assert "rel_diff(general, stable)" in out
        rel = float(out.split("rel_diff(general, stable) = ")[1].split()[0])
        assert rel < 1e-6

    def test_nested_second_term_zero_with_shared(self, capsys):
        code = main(["peppf", "--partition",
                     json.dumps({"freq1": [], "freq2": [], "shared": [[1, 1]]}),
                     "--model", "nested", "--family", "gamma",
                     "--c", "1.0", "--c0", "1.0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "exactly 0" in out

    def test_invalid_partition_exit_code(self, capsys):
        code = main(["peppf", "--partition", '{"freq1": [0]}'])
        assert code == 2


class TestDiagnose:
    def test_pacf_and_trace(self, fit_dir, tmp_path, capsys):
        out = tmp_path / "diag"
        code = main(["diagnose", "--chain", str(fit_dir / "chain.csv"),
                     "--out", str(out), "--max-lag", "10",
                     "--trace-points", "5", "10", "--trace-sample", "2"])
        assert code == 0
        lines = (out / "pacf.csv").read_text().splitlines()
        assert lines[0] == "lag,sigma,sigma0"
        assert lines[1] == "0,1.0,1.0"  # lag 0 equals 1 by convention
        assert len(lines) == 12
        trace_header = (out / "trace.csv").read_text().splitlines()[0]
        assert trace_header.count("f2_at_") == 2
        assert (out / "pacf.png").exists() and (out / "trace.png").exists()

    def test_malformed_chain_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("iter,I\n1,2\n")
        code = main(["diagnose", "--chain", str(bad), "--out", str(tmp_path / "d")])
        assert code == 2
