import json
import os

import numpy as np
import pytest

from fieldtree.cli import build_parser, main


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def _gen(tmp_path, name="data", count=2, category="table", seed=0, dim=16, grid=16):
    out = str(tmp_path / name)
    rc = main([
        "gen-data", "--category", category, "--count", str(count),
        "--seed", str(seed), "--out", out, "--voxel-dim", str(dim),
        "--grid-res", str(grid),
    ])
    assert rc == 0
    return out


TINY_TRAIN = [
    "--levels", "2", "--code-dim", "16", "--fd-hidden", "16",
    "--pd-hidden", "16", "16", "--encoder-channels", "4", "8",
    "--stage-iters", "3", "--points-per-iter", "64",
]


def _train(tmp_path, data, name="run", extra=()):
    out = str(tmp_path / name)
    rc = main(["train", "--data", data, "--out", out, *TINY_TRAIN, *extra])
    assert rc == 0
    return out


# -- gen-data ---------------------------------------------------------------------


def test_gen_data_count_and_manifest(tmp_path):
    out = _gen(tmp_path, count=3)
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["shape_count"] == 3
    assert len(manifest["shape_ids"]) == 3


def test_gen_data_deterministic(tmp_path):
    a = _gen(tmp_path, "a", seed=4)
    b = _gen(tmp_path, "b", seed=4)
    assert _tree_bytes(a) == _tree_bytes(b)


def test_gen_data_invalid_category_exit_code(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen-data", "--category", "sofa", "--count", "1",
              "--out", str(tmp_path / "x")])
    assert e.value.code == 2


def test_missing_dataset_is_data_error(tmp_path):
    rc = main(["train", "--data", str(tmp_path / "nope"), "--out",
               str(tmp_path / "run"), *TINY_TRAIN])
    assert rc == 3


# -- train ------------------------------------------------------------------------


def test_train_outputs(tmp_path):
    data = _gen(tmp_path)
    run = _train(tmp_path, data)
    for f in ("checkpoint", "loss_log.txt", "resolved_config.txt", "loss_curves.png"):
        assert os.path.exists(os.path.join(run, f)), f
    assert not os.path.exists(run + ".tmp")
    resolved = open(os.path.join(run, "resolved_config.txt")).read()
    assert "network.levels = 2" in resolved
    assert "train.stage_iterations = 3" in resolved


def test_train_idempotent_byte_identical(tmp_path):
    data = _gen(tmp_path)
    a = _train(tmp_path, data, "a")
    b = _train(tmp_path, data, "b")
    ta, tb = _tree_bytes(a), _tree_bytes(b)
    assert sorted(ta) == sorted(tb)
    diff = [k for k in ta if ta[k] != tb[k]]
    assert diff == [], diff


def test_train_config_file_with_flag_override(tmp_path):
    data = _gen(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "levels = 2\ncode_dim = 16\nfd_hidden = 16\npd_hidden = 16,16\n"
        "encoder_channels = 4,8\nstage_iters = 3\npoints_per_iter = 64\n"
        "seed = 7\n"
    )
    out = str(tmp_path / "run")
    rc = main(["train", "--config", str(cfg), "--data", data, "--out", out,
               "--seed", "9"])  # the flag beats the file
    assert rc == 0
    resolved = open(os.path.join(out, "resolved_config.txt")).read()
    assert "network.seed = 9" in resolved


def test_train_unknown_config_key(tmp_path):
    data = _gen(tmp_path)
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 1\n")
    rc = main(["train", "--config", str(cfg), "--data", data,
               "--out", str(tmp_path / "r")])
    assert rc == 2


def test_help_documents_ablation_flags():
    parser = build_parser()
    import io
    from contextlib import redirect_stdout

    sub = parser._subparsers._group_actions[0].choices["train"]
    buf = io.StringIO()
    with redirect_stdout(buf):
        sub.print_help()
    text = buf.getvalue()
    for flag in (
        "--config", "--seed", "--out", "--levels", "--head", "--flat-branches",
        "--no-decomposition-loss", "--no-progressive", "--stage-iters",
        "--resolution",
    ):
        assert flag in text, flag


# -- eval -------------------------------------------------------------------------


def test_eval_self_check_identity(tmp_path):
    data = _gen(tmp_path, dim=32)
    out = str(tmp_path / "eval")
    rc = main(["eval", "--data", data, "--out", out, "--self-check",
               "--eval-resolution", "32", "--cd-points", "256"])
    assert rc == 0
    rows = open(os.path.join(out, "shapes.csv")).read().strip().split("\n")[1:]
    for row in rows:
        _, _, cd, iou = row.split(",")
        assert float(cd) == 0.0
        assert float(iou) == 1.0


def test_eval_trained_checkpoint(tmp_path):
    data = _gen(tmp_path, dim=16)
    run = _train(tmp_path, data)
    out = str(tmp_path / "eval")
    rc = main(["eval", "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--out", out, "--eval-resolution", "16",
               "--mc-resolution", "32", "--cd-points", "128"])
    assert rc == 0
    for f in ("metrics.csv", "metrics.txt", "shapes.csv", "metrics.png",
              "snapping.json", "resolved_config.txt"):
        assert os.path.exists(os.path.join(out, f)), f
    lines = open(os.path.join(out, "metrics.csv")).read().strip().split("\n")
    assert lines[0] == "category,metric,level,value"
    metrics = {tuple(l.split(",")[:3]) for l in lines[1:]}
    assert ("table", "cd", "1") in metrics
    assert ("table", "iou", "2") in metrics
    assert ("table", "miou", "2") in metrics


def test_eval_needs_checkpoint_or_self_check(tmp_path):
    data = _gen(tmp_path)
    rc = main(["eval", "--data", data, "--out", str(tmp_path / "e")])
    assert rc == 2


# -- extract / segment ---------------------------------------------------------------


def test_extract_level_meshes(tmp_path):
    data = _gen(tmp_path, count=1)
    run = _train(tmp_path, data, extra=("--levels", "3"))
    manifest = json.load(open(os.path.join(data, "manifest.json")))
    out = str(tmp_path / "mesh")
    rc = main(["extract", "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--shape", manifest["shape_ids"][0],
               "--out", out, "--mc-resolution", "24"])
    assert rc == 0
    objs = sorted(f for f in os.listdir(out) if f.endswith(".obj"))
    assert objs == ["level_1.obj", "level_2.obj", "level_3.obj"]
    doc = json.load(open(os.path.join(out, "hierarchy.json")))
    assert len(doc["nodes"]) == 14


def test_extract_unknown_shape(tmp_path):
    data = _gen(tmp_path, count=1)
    run = _train(tmp_path, data)
    rc = main(["extract", "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--shape", "table_999999",
               "--out", str(tmp_path / "m")])
    assert rc == 3


def test_segment_outputs(tmp_path):
    data = _gen(tmp_path, count=2)
    run = _train(tmp_path, data)
    out = str(tmp_path / "seg")
    rc = main(["segment", "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--out", out])
    assert rc == 0
    manifest = json.load(open(os.path.join(data, "manifest.json")))
    for sid in manifest["shape_ids"]:
        f = os.path.join(out, "branches", f"{sid}.u8")
        assert os.path.getsize(f) == manifest["points_per_shape"]
    assert os.path.exists(os.path.join(out, "snapping.json"))


# -- svr ---------------------------------------------------------------------------


def test_svr_train_and_infer(tmp_path):
    data = _gen(tmp_path, count=2)
    run = _train(tmp_path, data)
    svr_out = str(tmp_path / "svr")
    rc = main(["svr-train", "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--out", svr_out, "--iters", "4", "--batch", "2"])
    assert rc == 0
    for f in ("checkpoint", "images", "svr_loss_log.txt", "svr_loss.png"):
        assert os.path.exists(os.path.join(svr_out, f)), f
    manifest = json.load(open(os.path.join(data, "manifest.json")))
    infer_out = str(tmp_path / "svr_mesh")
    rc = main(["svr-infer", "--svr-checkpoint", os.path.join(svr_out, "checkpoint"),
               "--checkpoint", os.path.join(run, "checkpoint"),
               "--data", data, "--shape", manifest["shape_ids"][0],
               "--out", infer_out, "--mc-resolution", "24"])
    assert rc == 0
    assert os.path.exists(os.path.join(infer_out, "hierarchy.json"))
