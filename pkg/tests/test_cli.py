import csv
import json
import shutil

import numpy as np
import pytest

from ecgsr.cli.config import ExperimentConfig, load_config, parse_config
from ecgsr.cli.main import main
from ecgsr.signal_data import load_manifest, load_recording

TINY = """
out_dir = out
synth_records = 18
synth_fs = 100
synth_duration = 2
window_seconds = 2
fs_grid = 100, 10
sr_source_fs = 10
sr_target_fs = 100
n_folds = 3
judge_channels = 2,2,2,2,3,3,3,3,4,4
judge_gru_hidden = 3
judge_attention_dim = 3
judge_epochs = 1
judge_batch = 8
esr_channels = 3
esr_blocks = 1
sr_epochs = 1
sr_batch = 8
sweep_grid = 100, 50, 10
sweep_epochs = 1
report_records = 2
"""


def write_cfg(tmp_path, extra="", base=TINY):
    p = tmp_path / "exp.cfg"
    p.write_text(base + extra)
    return p


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1, err
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full tiny pipeline, shared by the read-only tests below."""
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = write_cfg(tmp)
    for cmd in ("synth", "prepare", "train-judge", "train-sr", "evaluate", "report"):
        assert main([cmd, "--config", str(cfg)]) == 0, cmd
    return tmp, cfg


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = ExperimentConfig()
        assert parse_config(cfg.to_text()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config("colour = red\n")

    def test_bad_value(self):
        with pytest.raises(ValueError, match="n_folds"):
            parse_config("n_folds = ten\n")

    def test_seed_precedence(self, tmp_path):
        p = write_cfg(tmp_path, "seed = 3\n")
        assert load_config(p, environ={}).seed == 3
        assert load_config(p, environ={"ESR_SEED": "5"}).seed == 5
        assert load_config(p, seed=9, environ={"ESR_SEED": "5"}).seed == 9

    def test_paths_relative_to_config(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path), environ={})
        assert cfg.out == tmp_path / "out"

    def test_validation(self, tmp_path):
        with pytest.raises(ValueError, match="preset"):
            load_config(write_cfg(tmp_path, "gammas = LC, LX\n"), environ={})
        with pytest.raises(ValueError):
            load_config(write_cfg(tmp_path, "esr_factors = 2, 2\n"), environ={})


class TestSynthPrepare:
    def test_class_balance_and_determinism(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "synth_records = 90\n")
        assert run(capsys, "synth", "--config", str(cfg))[0] == 0
        src = tmp_path / "out" / "data" / "source"
        m = load_manifest(src / "manifest.csv")
        counts = {}
        for e in m.entries:
            counts[e.label] = counts.get(e.label, 0) + 1
        assert len(counts) == 9 and set(counts.values()) == {10}
        first = {p.name: p.read_bytes() for p in src.iterdir()}
        shutil.rmtree(src)
        assert run(capsys, "synth", "--config", str(cfg))[0] == 0
        assert {p.name: p.read_bytes() for p in src.iterdir()} == first
        assert (tmp_path / "out" / "config.synth.txt").is_file()

    def test_zero_records(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth", "--config", str(write_cfg(tmp_path, "synth_records = 0\n")))
        assert code != 0 and error_of(err)["error"] == "config"

    def test_prepare_grid(self, tmp_path, capsys):
        extra = "synth_records = 9\nsynth_fs = 500\nsynth_duration = 10\nwindow_seconds = 10\nfs_grid = 250, 25\nsr_source_fs = 25\nsr_target_fs = 250\n"
        cfg = write_cfg(tmp_path, extra)
        assert run(capsys, "synth", "--config", str(cfg))[0] == 0
        code, out, _ = run(capsys, "prepare", "--config", str(cfg))
        assert code == 0 and len(out.split()) == 2
        m = load_manifest(tmp_path / "out" / "data" / "fs25" / "manifest.csv")
        assert "mode=decimate" in m.note
        assert load_recording(m.entries[0].path, m.entries[0]).samples.size == 250

    def test_prepare_rejects_upsampling(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "fs_grid = 600, 10\n")
        run(capsys, "synth", "--config", str(cfg))
        code, _, err = run(capsys, "prepare", "--config", str(cfg))
        assert code != 0 and error_of(err)["error"] == "config"

    def test_prepare_non_divisor_interpolates(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "fs_grid = 100, 15, 10\n")
        run(capsys, "synth", "--config", str(cfg))
        assert run(capsys, "prepare", "--config", str(cfg))[0] == 0
        m = load_manifest(tmp_path / "out" / "data" / "fs15" / "manifest.csv")
        assert "mode=linear_interp" in m.note


class TestDependencies:
    def test_train_sr_without_judges(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        run(capsys, "synth", "--config", str(cfg))
        run(capsys, "prepare", "--config", str(cfg))
        code, _, err = run(capsys, "train-sr", "--config", str(cfg))
        e = error_of(err)
        assert code != 0 and e["error"] == "dependency" and "train-judge" in e["message"]

    def test_prepare_without_source(self, tmp_path, capsys):
        code, _, err = run(capsys, "prepare", "--config", str(write_cfg(tmp_path)))
        assert code != 0 and error_of(err)["error"] == "dependency"

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "synth", "--config", str(tmp_path / "none.cfg"))
        assert code != 0 and error_of(err)["error"] == "config"


class TestPipeline:
    def test_fold_reports(self, pipeline):
        tmp, _ = pipeline
        runs = tmp / "out" / "runs" / "II"
        for name in ("judge_fs100", "judge_fs10", "sr_LC", "sr_LR", "sr_LJ"):
            assert sorted(p.name for p in (runs / name).iterdir() if p.is_dir()) == ["fold_0", "fold_1", "fold_2"]
            assert (runs / name / "config.txt").is_file()
        assert (runs / "folds.csv").is_file()

    def test_judges_frozen_on_disk(self, pipeline):
        tmp, _ = pipeline
        for k in range(3):
            text = (tmp / "out" / "runs" / "II" / "judge_fs100" / f"fold_{k}" / "model.ckpt").read_text()
            assert text.splitlines()[2] == "frozen=1"

    def test_report_json(self, pipeline):
        tmp, _ = pipeline
        rep = json.loads((tmp / "out" / "report" / "report.json").read_text())
        lead = rep["leads"]["II"]
        assert set(lead["conditions"]) == {"C_N", "LC", "LR", "LJ", "C_P"}
        for cond in lead["conditions"].values():
            assert len(cond["fold_overall"]) == 3
            assert isinstance(cond["f1_pct"]["overall"], int)
        table = lead["ppr"]["per_class"]
        assert set(table) == {"Normal", "AF", "I-AVB", "LBBB", "RBBB", "PAC", "PVC", "STD", "STE", "Overall"}
        for entry in table.values():
            v = entry["median_of_fold_ppr"]
            assert v is None or np.isfinite(v)
            if entry["anomalous"]:
                assert entry["t_test"]["df"] == 2
        assert str(tmp) not in (tmp / "out" / "report" / "report.json").read_text()

    def test_boxplot_rows(self, pipeline):
        tmp, _ = pipeline
        with open(tmp / "out" / "report" / "boxplot_II.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["condition"] for r in rows] == ["C_N", "LC", "LR", "LJ", "C_P"]
        assert (tmp / "out" / "report" / "figures" / "boxplot_II.png").stat().st_size > 0

    def test_waveforms(self, pipeline):
        tmp, _ = pipeline
        files = sorted((tmp / "out" / "report" / "waveforms").glob("*.csv"))
        assert len(files) == 2
        with open(files[0]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "original", "linear", "LC", "LJ", "LR"]
        assert len(rows) - 1 == 200  # 2 s at 100 Hz

    def test_self_comparison(self, pipeline, tmp_path):
        tmp, cfg_path = pipeline
        from ecgsr.cli.commands import evaluate_lead
        from ecgsr.signal_data import LeadId

        cfg = load_config(cfg_path, environ={})
        cfg.ppr_condition = "C_P"
        table = evaluate_lead(cfg, LeadId.II, 3)["ppr"]["per_class"]
        for entry in table.values():
            assert all(v is None or v == 1.0 for v in entry["fold_values"])
        cfg.ppr_condition = "C_N"
        table = evaluate_lead(cfg, LeadId.II, 3)["ppr"]["per_class"]
        for entry in table.values():
            assert all(v is None or v == 0.0 for v in entry["fold_values"])

    def test_unknown_run(self, pipeline, capsys):
        tmp, cfg = pipeline
        bad = cfg.parent / "bad.cfg"
        bad.write_text(cfg.read_text() + "report_conditions = C_N, LQ\n")
        code, _, err = run(capsys, "report", "--config", str(bad))
        assert code != 0 and "LQ" in error_of(err)["message"]
        bad.write_text(cfg.read_text() + "report_ids = nosuch\n")
        code, _, err = run(capsys, "report", "--config", str(bad))
        assert code != 0 and "nosuch" in error_of(err)["message"]

    def test_evaluate_is_byte_stable(self, pipeline, capsys):
        tmp, cfg = pipeline
        before = (tmp / "out" / "report" / "report.json").read_bytes()
        assert run(capsys, "evaluate", "--config", str(cfg))[0] == 0
        assert (tmp / "out" / "report" / "report.json").read_bytes() == before


class TestSweep:
    def test_three_rows(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        run(capsys, "synth", "--config", str(cfg))
        code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--jobs", "2")
        assert code == 0
        with open(tmp_path / "out" / "sweep" / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["fs"] for r in rows] == ["100", "50", "10"]
        assert (tmp_path / "out" / "sweep" / "sweep.png").is_file()

    def test_empty_grid(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "sweep_grid = \n")
        run(capsys, "synth", "--config", str(cfg))
        code, _, err = run(capsys, "sweep", "--config", str(cfg))
        assert code != 0 and error_of(err)["error"] == "config"

    @pytest.mark.slow
    def test_source_rate_beats_one_hertz(self, tmp_path, capsys):
        extra = (
            "synth_records = 90\nsynth_duration = 6\nwindow_seconds = 6\nn_folds = 3\n"
            "sweep_grid = 100, 1\nsweep_epochs = 60\njudge_lr = 3e-3\njudge_batch = 6\n"
            "judge_channels = 8,8,16,16,16,16,16,16,16,16\njudge_gru_hidden = 8\njudge_attention_dim = 8\n"
        )
        cfg = write_cfg(tmp_path, extra)
        run(capsys, "synth", "--config", str(cfg))
        assert run(capsys, "sweep", "--config", str(cfg))[0] == 0
        with open(tmp_path / "out" / "sweep" / "sweep.csv") as fh:
            f1 = {r["fs"]: float(r["median_f1"]) for r in csv.DictReader(fh)}
        assert f1["100"] >= f1["1"] + 0.3
