import json

import pytest

from unbiaspuf import records
from unbiaspuf.cli import main
from unbiaspuf.experiment import ExperimentConfig
from unbiaspuf.popmodel import PopulationConfig
from unbiaspuf.rtlgen import RtlParams, emit_rtl


@pytest.fixture
def config_file(tmp_path):
    cfg = ExperimentConfig(population=PopulationConfig(num_chips=6, num_challenges=16, num_repeats=4, seed=9))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def test_pipeline_subcommands(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    base = ["--config", str(config_file), "--out-dir", str(out)]
    assert main(["simulate", *base, "--seed", "3"]) == 0
    assert main(["extract", *base, "--bit", "10"]) == 0
    assert main(["metrics", *base, "--bit", "10"]) == 0
    assert main(["predict", *base, "--sigma", "521"]) == 0
    assert main(["select", *base]) == 0
    for name in ("measurements.csv", "responses_reference.csv", "responses_repeats.csv",
                 "fhd_summary.csv", "fhd_summary.json", "predictions.csv", "bit_report.csv", "selection.json"):
        assert (out / name).exists(), name
    assert len(records.read_bit_reports(out / "predictions.csv")) == 19
    assert "selected_bit" in json.loads((out / "selection.json").read_text())


def test_report_and_baseline(tmp_path, config_file):
    assert main(["report", "--config", str(config_file), "--out-dir", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "summary.json").exists()
    assert main(["baseline", "--config", str(config_file), "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "baseline.csv").read_text().startswith("extraction,bit_index,inter_fhd,intra_fhd\n")


def test_emit_rtl(tmp_path):
    out = tmp_path / "puf.v"
    assert main(["emit-rtl", "--out", str(out)]) == 0
    assert out.read_text() == emit_rtl(RtlParams())
    assert main(["emit-rtl", "--out-dir", str(tmp_path), "--module-name", "p2", "--challenge-width", "3"]) == 0
    assert (tmp_path / "p2.v").read_text() == emit_rtl(RtlParams(challenge_width=3, module_name="p2"))


def test_emit_rtl_bad_params(tmp_path, capsys):
    assert main(["emit-rtl", "--out", str(tmp_path / "x.v"), "--ro-inverters", "4"]) == 2
    assert "ro_inverters" in capsys.readouterr().err


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"population": {"num_chips": 1}}))
    assert main(["report", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"populaton": {}}))
    assert main(["report", "--config", str(bad)]) == 2
    bad.write_text("{not json")
    assert main(["report", "--config", str(bad)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path, config_file):
    assert main(["extract", "--config", str(config_file), "--out-dir", str(tmp_path / "empty"), "--bit", "3"]) == 5


def test_strict_overflow_exit_code(tmp_path):
    cfg = {"population": {"register_width": 12, "bias_mean": 2048, "bias_std": 0, "inter_std": 100,
                          "noise_std": 5, "num_chips": 4, "num_challenges": 5, "num_repeats": 3}}
    path = tmp_path / "o.json"
    path.write_text(json.dumps(cfg))
    with pytest.warns(UserWarning):
        assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path), "--strict-overflow"]) == 3
    with pytest.warns(UserWarning):
        assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path)]) == 0


def test_infeasible_selection_exit_code(tmp_path):
    # noise straddles zero, so every high bit flips together with the sign
    cfg = {"population": {"num_chips": 3, "num_challenges": 8, "num_repeats": 4, "noise_std": 1e5,
                          "register_width": 40}, "intra_threshold": 0.01}
    path = tmp_path / "n.json"
    path.write_text(json.dumps(cfg))
    assert main(["report", "--config", str(path), "--out-dir", str(tmp_path)]) == 4
