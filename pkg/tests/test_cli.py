import json
import subprocess
import sys

import numpy as np
import pytest

from renewal_strings.catalog import concat, read_catalog, read_detections, write_catalog
from renewal_strings.cli import main
from renewal_strings.generator import forced_track

from conftest import uniform_catalog

SMALL_GEN = {
    "bounds": [0, 40000, 0, 40000],
    "background": 2e-7,
    "birth_mean": None,
    "n_angles": 20,
    "seed": 1,
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "generator": SMALL_GEN,
        "detector": {"n_angles": 120},
        "hough": {"n_angles": 100, "lines_per_angle": 300},
        "io": {"render_scale": 0.01},
    }))
    return str(path)


@pytest.fixture
def track_catalog(tmp_path):
    bg = uniform_catalog(300, side=40000.0, seed=2)
    tr = forced_track(bg.bounds, (5000.0, 6000.0), 30.0, np.random.default_rng(3), n_points=40, label=1)
    cat = concat([bg, tr], bg.bounds)
    path = tmp_path / "track.csv"
    write_catalog(cat, path)
    return str(path), cat


def test_generate_is_deterministic_and_has_no_tracks(tmp_path, config, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--config", config, "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("background\t")
    assert main(["generate", "--config", config, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    cat = read_catalog(a)
    assert len(cat) > 0 and np.all(cat.labels == 0)


def test_seed_override_changes_output(tmp_path, config):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["generate", "--config", config, "--out", str(a)])
    main(["generate", "--config", config, "--out", str(b), "--seed", "2"])
    assert a.read_bytes() != b.read_bytes()


def test_detect_threshold_and_threads(tmp_path, config, track_catalog, capsys):
    path, cat = track_catalog
    o1, o2, o3 = (str(tmp_path / f"d{i}.csv") for i in range(3))
    assert main(["detect", "--config", config, "--in", path, "--out", o1]) == 0
    assert "DET=" in capsys.readouterr().out
    _, f1, _ = read_detections(o1)
    assert f1[cat.labels > 0].sum() >= 0.9 * 40
    assert main(["detect", "--config", config, "--in", path, "--out", o2, "--threshold", "0.99"]) == 0
    _, f2, _ = read_detections(o2)
    assert np.all(f1[f2])
    assert main(["detect", "--config", config, "--in", path, "--out", o3, "--threads", "3"]) == 0
    assert open(o1, "rb").read() == open(o3, "rb").read()


def test_detect_pure_background_flags_nothing(tmp_path, config, capsys):
    cat_path = tmp_path / "bg.csv"
    write_catalog(uniform_catalog(1000, seed=1), cat_path)
    assert main(["detect", "--config", config, "--in", str(cat_path), "--out", str(tmp_path / "o.csv")]) == 0
    assert "DET=0 " in capsys.readouterr().out


def test_evaluate_perfect_flags(tmp_path, config, track_catalog, capsys):
    path, cat = track_catalog
    det = tmp_path / "perfect.csv"

    class Perfect:
        p_track = (cat.labels > 0).astype(float)
        flag = cat.labels > 0
        detect_angle = np.where(cat.labels > 0, 30.0, np.nan)

    write_catalog(cat, det, detections=Perfect)
    out_csv = tmp_path / "eval.csv"
    assert main(["evaluate", "--in", str(det), "--truth", path, "--out", str(out_csv)]) == 0
    text = capsys.readouterr().out.splitlines()
    assert text[1].split()[0] == "0" and text[1].split()[2] == "0"
    assert out_csv.read_text().splitlines()[1].startswith("0,")


def test_evaluate_mismatched_counts_exit_2(tmp_path, track_catalog):
    path, cat = track_catalog
    det = tmp_path / "short.csv"
    from renewal_strings.detector import sweep, DetectorConfig
    small = uniform_catalog(5, seed=1)
    write_catalog(small, det, detections=sweep(small, DetectorConfig(n_angles=4)))
    assert main(["evaluate", "--in", str(det), "--truth", path]) == 2


def test_hough_table(tmp_path, track_catalog, capsys):
    path, _ = track_catalog
    cfg = tmp_path / "h.json"
    cfg.write_text(json.dumps({"hough": {"truth_tracks": [[30.0, 5000.0, 6000.0]]}}))
    table = tmp_path / "table.csv"
    assert main(["hough", "--config", str(cfg), "--in", path, "--out", str(tmp_path / "lines.csv"),
                 "--table", str(table)]) == 0
    out = capsys.readouterr().out
    assert "THEOR" in out and "4.36e6" in out and "0.8712" in out
    rows = table.read_text().splitlines()
    assert len(rows) == 7


def test_render(tmp_path, config, track_catalog):
    path, cat = track_catalog
    svg = tmp_path / "p.svg"
    assert main(["render", "--config", config, "--in", path, "--out", str(svg)]) == 0
    assert svg.read_text().count("<ellipse") == len(cat)


@pytest.mark.parametrize("argv", [
    ["detect", "--in", "/no/such/file.csv", "--out", "x.csv"],
    ["generate"],
    ["bogus"],
    ["generate", "--out", "x.csv", "--config", "/no/such.json"],
    ["detect", "--threads", "0", "--in", "a", "--out", "b"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"generator": {"sead": 1}}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2


def test_internal_error_exits_1(monkeypatch, tmp_path):
    import renewal_strings.cli as cli

    def boom(args, cfg):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "render", boom)
    assert main(["render"]) == 1


def test_console_script_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "renewal_strings.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "generate" in r.stdout
