import numpy as np
import pytest

from gpsketch import cli
from gpsketch.errors import InvalidShape, ParseError, SchemaMismatch


def run(argv):
    return cli.main([str(a) for a in argv])


class TestSynth:
    def test_zero_bumps_is_pure_noise(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run(["synth", "--n", 400, "--bumps", "", "--noise-var", 1.0,
                    "--train-frac", 0.8, "--seed", 3, "--out", out]) == 0
        data = cli.read_dataset(str(out))
        assert abs(np.mean(data.y)) <= 3.0 / np.sqrt(400)

    def test_zero_noise_matches_bump_formula(self, tmp_path):
        out = tmp_path / "d.csv"
        run(["synth", "--n", 50, "--bumps", "0.5:0.01:2.0", "--noise-var", 0,
             "--train-frac", 0.5, "--seed", 1, "--out", out])
        data = cli.read_dataset(str(out))
        expect = 2.0 * np.exp(-((data.x.ravel() - 0.5) ** 2) / 0.01)
        np.testing.assert_allclose(data.y, expect, atol=1e-15)

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["synth", "--n", 64, "--seed", 9, "--out"]
        run(argv + [a])
        run(argv + [b])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_bump_spec(self, tmp_path):
        assert run(["synth", "--bumps", "0.5:0.1", "--out",
                    tmp_path / "x.csv"]) == 2
        assert run(["synth", "--bumps", "1.5:0.1:1", "--out",
                    tmp_path / "x.csv"]) == 2


class TestConfigFile:
    def test_flags_beat_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n=30\nnoise-var=0.5\n")
        out = tmp_path / "d.csv"
        run(["synth", "--config", cfg, "--n", 40, "--out", out, "--seed", 0])
        data = cli.read_dataset(str(out))
        assert data.n == 40  # flag wins over config's 30

    def test_config_supplies_missing(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n=25\n")
        out = tmp_path / "d.csv"
        run(["synth", "--config", cfg, "--out", out, "--seed", 0])
        assert cli.read_dataset(str(out)).n == 25

    def test_malformed_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("this is not a pair\n")
        assert run(["synth", "--config", cfg, "--out", tmp_path / "d.csv"]) == 2

    def test_unknown_flag_is_fatal(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["synth", "--frobnicate", "1", "--out", tmp_path / "d.csv"])
        assert exc.value.code == 2


class TestTables:
    def test_table1_row_count_contract(self, tmp_path):
        out = tmp_path / "t1.csv"
        assert run(["table1", "--n", 150, "--ranks", "10", "--seeds", 1,
                    "--seed", 0, "--out", out]) == 0
        lines = [l for l in out.read_text().splitlines()
                 if l and not l.startswith("#")]
        cells = [l for l in lines[1:] if l.startswith("cell")]
        medians = [l for l in lines[1:] if l.startswith("median")]
        assert len(cells) == 3
        assert len(medians) == 3

    def test_table2_runs_and_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["table2", "--n", 60, "--decay", 0.5, "--eps", 0.1,
                "--seeds", 3, "--seed", 5, "--out"]
        assert run(argv + [a]) == 0
        assert run(argv + [b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_table2_header_echoes_config(self, tmp_path):
        out = tmp_path / "t2.csv"
        run(["table2", "--n", 50, "--seeds", 2, "--seed", 1, "--out", out])
        head = out.read_text().splitlines()[:4]
        assert head[0].startswith("# gpsketch")
        assert "# seed: 1" in head
        assert any("n=50" in l for l in head)


class TestFitPredict:
    def _make_data(self, tmp_path, n=80):
        out = tmp_path / "data.csv"
        run(["synth", "--n", n, "--bumps", "0.3:0.02:1.5,0.7:0.05:-1",
             "--noise-var", 0.04, "--train-frac", 0.8, "--seed", 2,
             "--out", out])
        return out

    def test_fit_outputs(self, tmp_path):
        data = self._make_data(tmp_path)
        out = tmp_path / "summary.csv"
        samples = tmp_path / "samples.csv"
        preds = tmp_path / "preds.csv"
        code = run(["fit", "--data", data, "--method", "rp", "--mode",
                    "target-error", "--eps", 0.1, "--theta1-grid", "0:2:6",
                    "--iterations", 80, "--burnin", 20, "--seed", 4,
                    "--out", out, "--samples-out", samples,
                    "--predictions-out", preds])
        assert code == 0
        body = [l for l in out.read_text().splitlines()
                if l and not l.startswith("#")]
        names = [l.split(",")[0] for l in body[1:]]
        assert names[:3] == ["tau", "theta1", "theta2"]
        assert "avg_required_rank" in names and "mspe" in names
        sample_rows = [l for l in samples.read_text().splitlines()
                       if l and not l.startswith("#")]
        assert sample_rows[0] == "iter,tau,theta1,theta2"
        assert len(sample_rows) == 1 + 60  # iterations - burnin
        pred_rows = [l for l in preds.read_text().splitlines()
                     if l and not l.startswith("#")]
        assert pred_rows[0] == "x1,y,y_pred,pred_var"
        assert len(pred_rows) == 1 + 16  # 20% of 80

    def test_fit_is_byte_identical(self, tmp_path):
        data = self._make_data(tmp_path, n=60)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{tag}.csv"
            samples = tmp_path / f"{tag}_samples.csv"
            run(["fit", "--data", data, "--method", "pp1", "--mode",
                 "fixed-rank", "--rank", 6, "--theta1-grid", "0:2:4",
                 "--iterations", 50, "--burnin", 10, "--seed", 7,
                 "--out", out, "--samples-out", samples])
            outs.append((out.read_bytes(), samples.read_bytes()))
        assert outs[0] == outs[1]

    def test_fit_empty_test_split_warns(self, tmp_path, capsys):
        data = self._make_data(tmp_path, n=40)
        # rewrite every row as train
        text = data.read_text().replace(",test", ",train")
        data.write_text(text)
        out = tmp_path / "summary.csv"
        code = run(["fit", "--data", data, "--method", "rp", "--mode",
                    "fixed-rank", "--rank", 5, "--theta1-grid", "0.5:1.5:3",
                    "--iterations", 30, "--burnin", 5, "--seed", 1,
                    "--out", out])
        assert code == 0
        assert "MSPE omitted" in capsys.readouterr().err
        body = out.read_text()
        assert "mspe" not in body

    def test_predict_from_samples(self, tmp_path):
        data = self._make_data(tmp_path, n=60)
        summary = tmp_path / "s.csv"
        samples = tmp_path / "samples.csv"
        run(["fit", "--data", data, "--method", "rp", "--mode", "fixed-rank",
             "--rank", 6, "--theta1-grid", "0:2:4", "--iterations", 40,
             "--burnin", 10, "--seed", 3, "--out", summary,
             "--samples-out", samples])
        preds = tmp_path / "p.csv"
        code = run(["predict", "--data", data, "--samples", samples,
                    "--method", "rp", "--mode", "fixed-rank", "--rank", 6,
                    "--seed", 3, "--out", preds])
        assert code == 0
        rows = [l for l in preds.read_text().splitlines()
                if l and not l.startswith("#")]
        assert len(rows) == 1 + 12

    def test_nan_in_data_is_numerical_failure(self, tmp_path):
        data = self._make_data(tmp_path, n=30)
        text = data.read_text().splitlines()
        for i, line in enumerate(text):
            if line.endswith(",train"):
                parts = line.split(",")
                parts[1] = "nan"
                text[i] = ",".join(parts)
                break
        data.write_text("\n".join(text) + "\n")
        code = run(["fit", "--data", data, "--method", "rp", "--mode",
                    "fixed-rank", "--rank", 4, "--theta1-grid", "0.5:1.5:2",
                    "--iterations", 20, "--burnin", 5, "--seed", 0,
                    "--out", tmp_path / "s.csv"])
        assert code == 3


class TestIngest:
    def test_abalone_mapping(self, tmp_path):
        raw = tmp_path / "abalone.data"
        raw.write_text(
            "M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\n"
            "F,0.53,0.42,0.135,0.677,0.2565,0.1415,0.21,9\n"
            "I,0.44,0.365,0.125,0.516,0.2155,0.114,0.155,10\n"
            "M,0.35,0.265,0.09,0.2255,0.0995,0.0485,0.07,7\n")
        out = tmp_path / "abalone.csv"
        assert run(["ingest", "--raw", raw, "--schema", "abalone",
                    "--no-standardize", "--train-frac", 0.75, "--seed", 0,
                    "--out", out]) == 0
        data = cli.read_dataset(str(out))
        assert data.dim == 10  # 3 one-hot + 7 numeric
        np.testing.assert_allclose(data.x[0, :3], [1, 0, 0])
        np.testing.assert_allclose(data.x[1, :3], [0, 1, 0])
        np.testing.assert_allclose(data.x[2, :3], [0, 0, 1])
        np.testing.assert_allclose(data.y, [15, 9, 10, 7])

    def test_abalone_schema_mismatch_lists_rows(self, tmp_path):
        raw = tmp_path / "bad.data"
        raw.write_text("X,1,2,3,4,5,6,7,8\n")
        assert run(["ingest", "--raw", raw, "--schema", "abalone",
                    "--out", tmp_path / "o.csv"]) == 2

    def test_numeric_standardization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        mat = rng.uniform(1.0, 9.0, size=(30, 4))
        raw = tmp_path / "m.csv"
        raw.write_text("\n".join(",".join(f"{v:.17g}" for v in row)
                                 for row in mat) + "\n")
        out = tmp_path / "canon.csv"
        run(["ingest", "--raw", raw, "--schema", "numeric", "--seed", 1,
             "--train-frac", 0.5, "--out", out])
        data = cli.read_dataset(str(out))
        header = {}
        for line in out.read_text().splitlines():
            if line.startswith("# config:"):
                for pair in line.split(": ", 1)[1].split():
                    k, _, v = pair.partition("=")
                    header[k] = v
        means = np.array([float(header[f"feature_mean_{i+1}"]) for i in range(3)])
        scales = np.array([float(header[f"feature_scale_{i+1}"]) for i in range(3)])
        recovered = data.x * scales + means
        np.testing.assert_allclose(recovered, mat[:, :3], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(data.y, mat[:, 3], rtol=0, atol=0)

    def test_sarcos_columns(self, tmp_path):
        rng = np.random.default_rng(2)
        mat = rng.standard_normal((5, 27))
        raw = tmp_path / "sarcos.txt"
        raw.write_text("\n".join(" ".join(f"{v:.17g}" for v in row)
                                 for row in mat) + "\n")
        out = tmp_path / "s.csv"
        run(["ingest", "--raw", raw, "--schema", "sarcos", "--no-standardize",
             "--train-frac", 0.6, "--seed", 0, "--out", out])
        data = cli.read_dataset(str(out))
        assert data.dim == 21
        np.testing.assert_allclose(data.y, mat[:, 21])
        np.testing.assert_allclose(data.x, mat[:, :21])

    def test_sarcos_too_few_columns(self, tmp_path):
        raw = tmp_path / "short.txt"
        raw.write_text("1 2 3\n")
        assert run(["ingest", "--raw", raw, "--schema", "sarcos",
                    "--out", tmp_path / "o.csv"]) == 2

    def test_canonical_roundtrip(self, tmp_path):
        src = tmp_path / "src.csv"
        run(["synth", "--n", 25, "--seed", 6, "--out", src])
        out = tmp_path / "round.csv"
        assert run(["ingest", "--raw", src, "--schema", "numeric",
                    "--out", out, "--seed", 6]) == 0
        a = cli.read_dataset(str(src))
        b = cli.read_dataset(str(out))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)
        np.testing.assert_array_equal(a.test_idx, b.test_idx)

    def test_parse_error_reports_line(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x1,y,split\n0.1,0.2,nonsense\n")
        with pytest.raises(ParseError, match="2"):
            cli.read_dataset(str(bad))
