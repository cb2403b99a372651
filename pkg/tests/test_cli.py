import csv
import math

import numpy as np
import pytest

from cpforecast.changepoint import read_change_points
from cpforecast.cli import main

QUICK = ["--batch-size", "30", "--epochs", "1", "--windows-per-epoch", "32"]


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    out = d / "s.csv"
    assert main(["synth", "--preset", "paper-synthetic", "--seed", "7", "--out", str(out)]) == 0
    return out, d / "s.cp.txt"


def test_synth_preset(synth):
    out, truth = synth
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y"] and len(rows) == 3001
    assert len(truth.read_text().splitlines()) == 13


def test_synth_byte_identical(synth, tmp_path):
    out, _ = synth
    again = tmp_path / "again.csv"
    main(["synth", "--preset", "paper-synthetic", "--seed", "7", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_synth_spec_without_change_points(tmp_path):
    spec = tmp_path / "custom.toml"
    spec.write_text("n = 50\nchange_points = []\nmeans = [2.0]\nnoise_std = 0.5\n")
    out = tmp_path / "c.csv"
    assert main(["synth", "--spec", str(spec), "--out", str(out)]) == 0
    assert (tmp_path / "c.cp.txt").read_text() == ""
    assert len(out.read_text().splitlines()) == 51


def test_detect_constant_series(tmp_path):
    src = tmp_path / "const.csv"
    src.write_text("t,y\n" + "".join(f"{i},3.0\n" for i in range(200)))
    out = tmp_path / "cp.txt"
    assert main(["detect", str(src), "--bandwidth", "20", "--out", str(out)]) == 0
    assert out.read_text() == ""


def test_detect_preset(synth, tmp_path):
    src, truth = synth
    out, stat = tmp_path / "cp.txt", tmp_path / "stat.csv"
    assert main(["detect", str(src), "--bandwidth", "40", "--eta", "0.1", "--out", str(out), "--stat-out", str(stat)]) == 0
    found = np.array(read_change_points(out).indices)
    true = np.array(read_change_points(truth).indices)
    assert abs(len(found) - 13) <= 1
    assert all(np.min(np.abs(true - c)) <= 40 for c in found)
    lines = stat.read_text().splitlines()
    assert lines[0] == "k,T_k" and len(lines) == 1 + 3000 - 2 * 40 + 1
    k, t = lines[1].split(",")
    assert int(k) == 40 and float(t) >= 0


def test_detect_unreachable_threshold(synth, tmp_path):
    out = tmp_path / "cp.txt"
    assert main(["detect", str(synth[0]), "--threshold", "1e9", "--out", str(out)]) == 0
    assert out.read_text() == ""


def test_compare_four_rows(synth, tmp_path):
    src, truth = synth
    out = tmp_path / "cmp"
    code = main(["compare", str(src), "--changepoints", str(truth), "--out-dir", str(out), *QUICK])
    assert code == 0
    rows = list(csv.DictReader(open(out / "table.csv")))
    assert [r["scenario"] for r in rows] == ["I", "II", "III", "IV"]
    assert all(math.isfinite(float(r["test_rmse"])) for r in rows)
    assert (out / "scenario_III.json").exists()


def test_compare_without_change_points(synth, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", str(synth[0]), "--out-dir", str(out), *QUICK]) == 0
    rows = list(csv.DictReader(open(out / "table.csv")))
    assert [r["scenario"] for r in rows] == ["I", "II", "IV"]


def test_compare_batch_size_above_smax(synth, tmp_path, capsys):
    src, truth = synth
    # closest true change points are 100 apart, so s_max = 50
    code = main(["compare", str(src), "--changepoints", str(truth), "--batch-size", "51", "--out-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "s_max" in err and err.rstrip().endswith("= 50")


def test_train_predict_round_trip(synth, tmp_path):
    src, truth = synth
    ckpt = tmp_path / "m.ckpt"
    args = ["train", str(src), "--mode", "batchcp", "--changepoints", str(truth), "--checkpoint", str(ckpt), *QUICK]
    assert main(args) == 0
    assert (tmp_path / "m.ckpt.report.json").exists()
    fc = tmp_path / "fc.csv"
    assert main(["predict", str(src), "--checkpoint", str(ckpt), "--horizon", "5", "--out", str(fc)]) == 0
    rows = list(csv.DictReader(open(fc)))
    assert len(rows) == 5 and rows[0]["t"] == "3000"
    for r in rows:
        mu, sigma, q05, q50, q95 = (float(r[c]) for c in ("mu", "sigma", "q05", "q50", "q95"))
        assert sigma > 0 and q05 <= q50 <= q95
    first = fc.read_bytes()
    main(["predict", str(src), "--checkpoint", str(ckpt), "--horizon", "5", "--out", str(fc)])
    assert fc.read_bytes() == first


def test_config_file_and_flag_override(synth, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"threshold": 1e9, "bandwidth": 40}')
    out = tmp_path / "cp.txt"
    assert main(["detect", str(synth[0]), "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text() == ""
    assert main(["detect", str(synth[0]), "--config", str(cfg), "--threshold", "5", "--out", str(out)]) == 0
    assert out.read_text() != ""


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["detect"])
        assert exc.value.code == 1

    def test_batchcp_without_file(self, synth):
        assert main(["train", str(synth[0]), "--mode", "batchcp"]) == 1

    def test_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,y\n0,1\n1,abc\n")
        assert main(["detect", str(bad)]) == 2

    def test_unknown_config_key(self, synth, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"no_such_flag": 1}')
        assert main(["detect", str(synth[0]), "--config", str(cfg)]) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure(self, synth, tmp_path):
        code = main(["train", str(synth[0]), "--learning-rate", "1e300", "--checkpoint", str(tmp_path / "m"), *QUICK])
        assert code == 3

    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["compare", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--batch-size", "--changepoints", "--bandwidth", "--eval-stride", "--seed", "--config"):
            assert flag in text
