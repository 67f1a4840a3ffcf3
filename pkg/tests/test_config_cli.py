import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hacd.cli import main
from hacd.config import config_keys, parse_config, parse_config_text
from hacd.errors import ConfigError

TINY_RUN = """\
# small scene and network so the whole pipeline takes seconds
height = 24
width = 24
bands = 6
anomaly_count = 2
anomaly_radius = 1
patch_size = 7
c1 = 2
c2 = 4
proj_dims = 16, 16, 8
pred_dims = 8, 8
cbam_reduction = 2
epochs = 2
batch_size = 16
seed = 3
"""


def test_empty_config_defaults():
    cfg = parse_config_text("")
    assert cfg.patch_size == 31
    assert cfg.arch.patch_size == 31
    assert cfg.train.epochs == 100
    assert cfg.train.batch_size == 128
    assert cfg.train.base_lr == 0.05
    assert cfg.align is True


def test_override_only_epochs():
    base = parse_config_text("")
    cfg = parse_config_text("epochs = 5  # quick\n")
    assert cfg.train.epochs == 5
    assert cfg.train.batch_size == base.train.batch_size
    assert cfg.scene == base.scene and cfg.arch == base.arch


def test_type_error_names_key():
    with pytest.raises(ConfigError, match=r"<config>:2: epochs expects a integer"):
        parse_config_text("\nepochs = soon\n")


def test_unknown_key_suggests_nearest():
    with pytest.raises(ConfigError, match="did you mean 'epochs'"):
        parse_config_text("epoch = 3\n")


def test_parse_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 1\nnot a pair\n")
    with pytest.raises(ConfigError, match="run.cfg:2"):
        parse_config(p)
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2\n")


def test_value_validation_from_dataclasses():
    with pytest.raises(ConfigError, match="batch_size"):
        parse_config_text("batch_size = 0\n")
    with pytest.raises(ConfigError):
        parse_config_text("methods = cc, nosuch\n")


def test_seed_threads_through():
    cfg = parse_config_text("seed = 11\n")
    assert cfg.scene.seed == 11 and cfg.train.seed == 11
    cfg = cfg.with_seed(4)
    assert (cfg.seed, cfg.scene.seed, cfg.train.seed) == (4, 4, 4)


def test_every_key_parses():
    assert "tile_size" in config_keys() and "time1" in config_keys()


# -- command line

def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(TINY_RUN)
    out = root / "out"
    common = ["--config", cfg, "--out", out]
    pair = ["--time1", out / "time1.hdr", "--time2", out / "time2.hdr"]
    assert run("synth", *common) == 0
    assert run("train", *common, *pair) == 0
    return cfg, out, common, pair


def test_synth_outputs(pipeline):
    _, out, _, _ = pipeline
    for name in ("time1.hdr", "time1.img", "time2.hdr", "time2.img", "mask.csv"):
        assert (out / name).is_file()
    mask = np.loadtxt(out / "mask.csv", delimiter=",")
    assert mask.shape == (24, 24) and mask.sum() == 10
    assert not [p for p in os.listdir(out) if p.endswith(".partial")]


def test_train_outputs(pipeline):
    _, out, _, _ = pipeline
    assert (out / "model.ckpt").is_file() and (out / "model.ckpt.cfg").is_file()
    lines = (out / "loss_history.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss" and len(lines) == 3


def test_detect_then_evaluate(pipeline):
    _, out, common, pair = pipeline
    assert run("detect", *common, *pair, "--method", "diff_rx") == 0
    assert (out / "diff_rx.pgm").is_file()
    assert run("evaluate", *common, "--scores", out / "diff_rx.csv", "--mask", out / "mask.csv") == 0
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["method"] == "diff_rx"
    assert 0.0 <= meta["auc"] <= 1.0
    assert meta["n_pos"] == 10 and meta["n_pos"] + meta["n_neg"] == 576
    assert (out / "roc.csv").read_text().startswith("threshold,fpr,tpr")


def test_detect_mtcnet(pipeline):
    _, out, common, pair = pipeline
    assert run("detect", *common, *pair, "--method", "mtcnet", "--checkpoint", out / "model.ckpt") == 0
    scores = np.loadtxt(out / "mtcnet.csv", delimiter=",")
    assert scores.shape == (24, 24) and np.all(scores >= 0)


def test_bench_rows(pipeline):
    _, out, common, pair = pipeline
    assert run("bench", *common, *pair, "--mask", out / "mask.csv", "--checkpoint", out / "model.ckpt") == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "method,auc"
    assert [l.split(",")[0] for l in lines[1:]] == ["cc", "ce", "usfa", "diff_rx", "sacd", "sdhacd", "mtcnet"]
    assert run("bench", *common, *pair, "--mask", out / "mask.csv") == 0
    assert len((out / "bench.csv").read_text().splitlines()) == 7


def test_byte_identical_reruns(pipeline, tmp_path):
    cfg, out, _, _ = pipeline
    other = tmp_path / "again"
    assert run("synth", "--config", cfg, "--out", other) == 0
    assert run("train", "--config", cfg, "--out", other, "--time1", other / "time1.hdr", "--time2", other / "time2.hdr") == 0
    for name in ("time1.img", "time2.img", "mask.csv", "model.ckpt", "model.ckpt.cfg", "loss_history.csv"):
        assert (other / name).read_bytes() == (out / name).read_bytes(), name


def test_unknown_method_is_usage_error(pipeline, capsys):
    _, _, common, pair = pipeline
    with pytest.raises(SystemExit) as e:
        run("detect", *common, *pair, "--method", "nosuch")
    assert e.value.code == 2
    assert "diff_rx" in capsys.readouterr().err


def test_module_error_exit_1_without_partials(pipeline, tmp_path, capsys):
    cfg, out, _, pair = pipeline
    empty = tmp_path / "empty"
    # missing checkpoint: caught before any work
    assert run("detect", "--config", cfg, "--out", empty, *pair, "--method", "mtcnet") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("hacd detect: error:")
    # band mismatch surfaces from inside the model after outputs were staged
    other = tmp_path / "wide"
    bad = tmp_path / "bad.cfg"
    bad.write_text(TINY_RUN.replace("bands = 6", "bands = 7"))
    assert run("synth", "--config", bad, "--out", other) == 0
    rc = run("detect", "--config", cfg, "--out", empty, "--time1", other / "time1.hdr",
             "--time2", other / "time2.hdr", "--method", "mtcnet", "--checkpoint", out / "model.ckpt")
    assert rc == 1
    assert "bands" in capsys.readouterr().err
    assert not empty.exists() or os.listdir(empty) == []


def test_bad_config_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("epochs = soon\n")
    assert run("synth", "--config", p, "--out", tmp_path) == 1
    assert "epochs" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hacd", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("synth", "train", "detect", "evaluate", "bench"):
        assert cmd in r.stdout
