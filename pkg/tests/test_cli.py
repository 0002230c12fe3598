import csv
import json

import pytest

from dprtf.cli import main


def test_simulate_train_localize(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DPRTF_OUTPUT_DIR", str(tmp_path))
    assert main(["train", "-o", "t.dprtf"]) == 0
    assert (tmp_path / "t.dprtf").exists()
    assert main(["simulate", "--t60", "0.3", "--azimuth", "-30", "--distance", "1.5",
                 "--duration", "1.5", "-o", "scene"]) == 0
    meta = json.loads((tmp_path / "scene.json").read_text())
    assert meta["azimuth_deg"] == -30.0
    assert (tmp_path / "scene_brir.wav").exists()
    capsys.readouterr()
    assert main(["localize", str(tmp_path / "scene.wav"), "--table", str(tmp_path / "t.dprtf"),
                 "--t60", "0.3"]) == 0
    assert capsys.readouterr().out.strip() == "-30"


def test_bench_config_file_and_flag_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DPRTF_OUTPUT_DIR", str(tmp_path))
    cfg = tmp_path / "grid.yaml"
    cfg.write_text("t60s: [0.3]\ndistances: [1.5]\nsnrs: [10, 0]\ntrials: 3\n"
                   "utterance_seconds: 1.0\noutput: from_config.csv\n")
    assert main(["bench", "--config", str(cfg), "--trials", "1", "--snrs", "5",
                 "-o", "flag.csv"]) == 0
    assert not (tmp_path / "from_config.csv").exists()
    rows = list(csv.DictReader(open(tmp_path / "flag.csv", newline="")))
    assert len(rows) == 3
    assert {r["snr_db"] for r in rows} == {"5"}


def test_stats_to_stdout(capsys):
    assert main(["stats", "--n-seq", "69", "--sequences", "500"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("xi,analytic_min")
    assert len(out) == 302


def test_errors_return_nonzero(tmp_path, capsys):
    assert main(["localize", str(tmp_path / "nope.wav")]) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("- a\n- b\n")
    assert main(["bench", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])
