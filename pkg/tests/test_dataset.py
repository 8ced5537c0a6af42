import json
import os

import numpy as np
import pytest

from fieldtree.dataset import (
    ContainerConsistencyError,
    ContainerFormatError,
    ContainerSizeError,
    ContainerVersionError,
    build_dataset,
    read_dataset,
    write_dataset,
)


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


def test_round_trip_bit_exact(tmp_path):
    ds = build_dataset("table", 3, 0, voxel_dim=16, grid_res=16)
    p1 = str(tmp_path / "d1")
    write_dataset(ds, p1)
    back = read_dataset(p1)
    assert back.manifest == ds.manifest
    for a, b in zip(ds.shapes, back.shapes):
        assert np.array_equal(a.voxels.occupancy, b.voxels.occupancy)
        assert np.array_equal(a.samples.points, b.samples.points)
        assert np.array_equal(a.samples.values, b.samples.values)
        assert np.array_equal(a.samples.labels, b.samples.labels)
    # writing the read-back dataset reproduces identical bytes
    p2 = str(tmp_path / "d2")
    write_dataset(back, p2)
    assert _tree_bytes(p1) == _tree_bytes(p2)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_round_trip_random_datasets(tmp_path, seed):
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, 4))
    cat = ["table", "chair", "plane"][seed % 3]
    ds = build_dataset(cat, count, int(rng.integers(0, 1000)), voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    back = read_dataset(path)
    for a, b in zip(ds.shapes, back.shapes):
        assert a.shape_id == b.shape_id
        assert np.array_equal(a.samples.points, b.samples.points)


def test_truncated_voxels_size_error(tmp_path):
    ds = build_dataset("table", 1, 0, voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    vfile = os.path.join(path, "shapes", ds.manifest.shape_ids[0], "voxels.u8")
    with open(vfile, "r+b") as f:
        f.truncate(100)
    with pytest.raises(ContainerSizeError):
        read_dataset(path)


def test_shape_count_mismatch_error(tmp_path):
    ds = build_dataset("table", 3, 0, voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    mpath = os.path.join(path, "manifest.json")
    with open(mpath) as f:
        manifest = json.load(f)
    manifest["shape_count"] = 2
    manifest["shape_ids"] = manifest["shape_ids"][:2]
    with open(mpath, "w") as f:
        json.dump(manifest, f)
    with pytest.raises(ContainerConsistencyError):
        read_dataset(path)


def test_version_mismatch_error(tmp_path):
    ds = build_dataset("table", 1, 0, voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    mpath = os.path.join(path, "manifest.json")
    with open(mpath) as f:
        manifest = json.load(f)
    manifest["version"] = 99
    with open(mpath, "w") as f:
        json.dump(manifest, f)
    with pytest.raises(ContainerVersionError):
        read_dataset(path)


def test_corrupt_manifest_format_error(tmp_path):
    ds = build_dataset("table", 1, 0, voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    with open(os.path.join(path, "manifest.json"), "w") as f:
        f.write("{not json")
    with pytest.raises(ContainerFormatError):
        read_dataset(path)


def test_missing_record_consistency_error(tmp_path):
    ds = build_dataset("table", 2, 0, voxel_dim=16)
    path = str(tmp_path / "d")
    write_dataset(ds, path)
    import shutil

    shutil.rmtree(os.path.join(path, "shapes", ds.manifest.shape_ids[1]))
    with pytest.raises(ContainerConsistencyError):
        read_dataset(path)


def test_write_rejects_inconsistent_manifest(tmp_path):
    ds = build_dataset("table", 2, 0, voxel_dim=16)
    ds.manifest.shape_count = 3
    with pytest.raises(ContainerConsistencyError):
        write_dataset(ds, str(tmp_path / "d"))
