import json

import numpy as np
import pytest

from depthclip import dataio
from depthclip import encoders as enc
from depthclip import pipeline as pl
from depthclip.cli import default_threads, main
from depthclip.geometry import PointCloud

SMALL = ["--data-seed", "2", "--per-class", "4", "--test-per-class", "1", "--threads", "1"]
TINY_CFG = """
[data]
classes = 3
[train]
epochs = 1
batch_size = 3
[head]
epochs = 2
k_shot = 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(TINY_CFG)
    return str(p)


@pytest.fixture
def sphere_xyz(tmp_path, rng):
    pts = rng.standard_normal((400, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    path = tmp_path / "sphere.xyz"
    dataio.save_cloud_xyz(PointCloud(pts), path)
    return path


def test_render_orth6(tmp_path, sphere_xyz):
    out = tmp_path / "maps"
    assert main(["render", "--input", str(sphere_xyz), "--views", "orth6", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.pgm")) == [f"view_{i:02d}.pgm" for i in range(6)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["views"]) == 6
    assert manifest["config_echo"]["render"]["depth_rule"] == "minimum"
    m = dataio.load_depth_pgm(out / "view_00.pgm")
    assert m.occupied.sum() == manifest["views"][0]["occupied"] > 0


def test_render_prior_work_setting(tmp_path, sphere_xyz):
    out = tmp_path / "maps"
    assert main(["render", "--input", str(sphere_xyz), "--views", "sph10", "--rule", "weighted",
                 "--dilation", "1", "--resolution", "64", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_echo"]["render"]["dilation"] == 1
    assert len(list(out.glob("*.pgm"))) == 10
    assert dataio.load_depth_pgm(out / "view_03.pgm").depth.shape == (64, 64)


def test_render_missing_input(tmp_path, capsys):
    assert main(["render", "--input", str(tmp_path / "nope.xyz"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_render_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("0 0 0\n1 2\n")
    assert main(["render", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.xyz:2" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, sphere_xyz):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[render]\nresolutoin = 32\n")
    assert main(["render", "--input", str(sphere_xyz), "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 2


def test_invalid_config_value(tmp_path, sphere_xyz):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[render]\ndilation = 0\n")
    assert main(["render", "--input", str(sphere_xyz), "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 2


def test_pretrain_zero_epochs_is_initialization(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert main(["pretrain", "--config", cfg_file, "--epochs", "0", "--seed", "4", "--out", str(out)] + SMALL) == 0
    ckpt = dataio.load_checkpoint(out / "checkpoint.c2pt")
    spec = enc.EncoderSpec()
    init = pl.init_depth_store(spec, 4).merged(enc.init_proxy(spec, 1234))
    for name in init.names():
        assert ckpt[name].tobytes() == init[name].tobytes()
    assert ckpt["anchors/vectors"].shape == (3, spec.out_dim)
    assert (out / "history.csv").read_text() == "step,L_intra,L_cross,sigma,total\n"
    run = json.loads((out / "run.json").read_text())
    assert run["steps"] == 0 and run["config_echo"]["train"]["seed"] == 4


def test_pretrain_writes_history(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert main(["pretrain", "--config", cfg_file, "--out", str(out)] + SMALL) == 0
    history = dataio.read_history_csv(out / "history.csv")
    assert [h["step"] for h in history] == [0, 1, 2]


def test_zeroshot_untrained(tmp_path, cfg_file, capsys):
    out = tmp_path / "zs.json"
    assert main(["zeroshot", "--config", cfg_file, "--checkpoint", "none", "--out", str(out)] + SMALL) == 0
    metrics = json.loads(out.read_text())
    assert set(metrics) >= {"accuracy", "per_class", "confusion", "config_echo"}
    assert set(metrics["per_class"]) == {"sphere", "cube", "cylinder"}
    assert np.sum(metrics["confusion"]) == 3
    assert "zero-shot: accuracy" in capsys.readouterr().out


def test_zeroshot_missing_checkpoint(tmp_path, cfg_file):
    assert main(["zeroshot", "--config", cfg_file, "--checkpoint", str(tmp_path / "x.c2pt"),
                 "--out", str(tmp_path / "o.json")] + SMALL) == 2


def test_zeroshot_corrupt_checkpoint(tmp_path, cfg_file):
    bad = tmp_path / "x.c2pt"
    bad.write_bytes(b"C2PX")
    assert main(["zeroshot", "--config", cfg_file, "--checkpoint", str(bad),
                 "--out", str(tmp_path / "o.json")] + SMALL) == 2


def test_fewshot_from_checkpoint(tmp_path, cfg_file):
    run = tmp_path / "run"
    assert main(["pretrain", "--config", cfg_file, "--out", str(run)] + SMALL) == 0
    out = tmp_path / "fs.json"
    assert main(["fewshot", "--config", cfg_file, "--checkpoint", str(run / "checkpoint.c2pt"), "--k", "2",
                 "--head", "gdpa", "--out", str(out)] + SMALL) == 0
    metrics = json.loads(out.read_text())
    assert set(metrics) >= {"accuracy", "per_class", "config_echo", "trajectory"}
    assert metrics["config_echo"]["head"]["k_shot"] == 2
    assert len(metrics["trajectory"]) == 3


def test_fewshot_full_and_too_many_shots(tmp_path, cfg_file):
    out = tmp_path / "fs.json"
    assert main(["fewshot", "--config", cfg_file, "--k", "full", "--head", "single", "--out", str(out)] + SMALL) == 0
    assert json.loads(out.read_text())["config_echo"]["head"]["k_shot"] is None
    assert main(["fewshot", "--config", cfg_file, "--k", "9", "--out", str(out)] + SMALL) == 2
    assert main(["fewshot", "--config", cfg_file, "--k", "many", "--out", str(out)] + SMALL) == 2


def test_bench_prints_table(capsys):
    assert main(["bench", "--thread-counts", "1,2", "--clouds", "2", "--points", "128"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["threads", "maps/s", "points/s"]
    assert [ln.split()[0] for ln in lines[1:]] == ["1", "2"]


def test_threads_env(monkeypatch):
    monkeypatch.setenv("C2P_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.delenv("C2P_THREADS")
    assert default_threads() >= 1
