"""Bit-exact dataset container.

Layout on disk:

    <root>/manifest.json          UTF-8 JSON, DatasetManifest fields
    <root>/shapes/<id>/voxels.u8  raw D^3 bytes, x-major
    <root>/shapes/<id>/points.f32 S x 3 little-endian float32, row-major
    <root>/shapes/<id>/values.u8  S bytes
    <root>/shapes/<id>/labels.u8  S bytes (only when manifest.has_labels)

read_dataset(write_dataset(...)) is the identity on all arrays.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .shapes import (
    CATEGORY_LABELS,
    PointSampleSet,
    ToyShapeSpec,
    VoxelGrid,
    gen_toy_shape,
    sample_points,
    voxelize,
)

CONTAINER_VERSION = 1


class DataError(Exception):
    """Base class for dataset container failures."""


class ContainerFormatError(DataError):
    """Missing or unparseable container pieces."""


class ContainerVersionError(DataError):
    """Manifest version not supported by this code."""


class ContainerSizeError(DataError):
    """A payload file's byte size disagrees with the manifest."""


class ContainerConsistencyError(DataError):
    """Manifest fields disagree with the records present."""


@dataclass
class DatasetManifest:
    version: int
    shape_count: int
    voxel_dim: int
    points_per_shape: int
    has_labels: bool
    category_names: list
    shape_ids: list


@dataclass
class ShapeRecord:
    shape_id: str
    voxels: VoxelGrid
    samples: PointSampleSet

    @property
    def category(self) -> str:
        return self.shape_id.rsplit("_", 1)[0]


@dataclass
class Dataset:
    manifest: DatasetManifest
    shapes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.shapes)


def build_dataset(
    category: str,
    count: int,
    base_seed: int,
    voxel_dim: int = 32,
    grid_res: int = 16,
    with_labels: bool = True,
) -> Dataset:
    """Generate `count` shapes with per-shape seeds base_seed..base_seed+count-1."""
    shapes = []
    for i in range(count):
        seed = base_seed + i
        spec = gen_toy_shape(category, seed)
        samples = sample_points(spec, grid_res, seed)
        if not with_labels:
            samples.labels = None
        shapes.append(
            ShapeRecord(
                shape_id=f"{category}_{seed:06d}",
                voxels=voxelize(spec, voxel_dim),
                samples=samples,
            )
        )
    manifest = DatasetManifest(
        version=CONTAINER_VERSION,
        shape_count=count,
        voxel_dim=voxel_dim,
        points_per_shape=grid_res**3,
        has_labels=with_labels,
        category_names=[category],
        shape_ids=[s.shape_id for s in shapes],
    )
    return Dataset(manifest, shapes)


def label_names_for(dataset: Dataset) -> Optional[tuple]:
    if len(dataset.manifest.category_names) == 1:
        return CATEGORY_LABELS.get(dataset.manifest.category_names[0])
    return None


def _check_consistency(manifest: DatasetManifest, shapes: list) -> None:
    if manifest.shape_count != len(shapes):
        raise ContainerConsistencyError(
            f"manifest shape_count {manifest.shape_count} but {len(shapes)} records"
        )
    if manifest.shape_ids != [s.shape_id for s in shapes]:
        raise ContainerConsistencyError("manifest shape_ids do not match records")
    for s in shapes:
        if s.voxels.dim != manifest.voxel_dim:
            raise ContainerConsistencyError(
                f"shape {s.shape_id}: voxel dim {s.voxels.dim} != manifest "
                f"{manifest.voxel_dim}"
            )
        if len(s.samples) != manifest.points_per_shape:
            raise ContainerConsistencyError(
                f"shape {s.shape_id}: {len(s.samples)} samples != manifest "
                f"{manifest.points_per_shape}"
            )
        if manifest.has_labels and s.samples.labels is None:
            raise ContainerConsistencyError(
                f"shape {s.shape_id}: manifest has_labels but record lacks labels"
            )


def write_dataset(dataset: Dataset, path: str) -> None:
    manifest = dataset.manifest
    _check_consistency(manifest, dataset.shapes)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "version": manifest.version,
                "shape_count": manifest.shape_count,
                "voxel_dim": manifest.voxel_dim,
                "points_per_shape": manifest.points_per_shape,
                "has_labels": manifest.has_labels,
                "category_names": manifest.category_names,
                "shape_ids": manifest.shape_ids,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    for rec in dataset.shapes:
        d = os.path.join(path, "shapes", rec.shape_id)
        os.makedirs(d, exist_ok=True)
        rec.voxels.occupancy.astype(np.uint8).tofile(os.path.join(d, "voxels.u8"))
        pts = np.ascontiguousarray(rec.samples.points, dtype="<f4")
        pts.tofile(os.path.join(d, "points.f32"))
        rec.samples.values.astype(np.uint8).tofile(os.path.join(d, "values.u8"))
        if manifest.has_labels:
            rec.samples.labels.astype(np.uint8).tofile(os.path.join(d, "labels.u8"))


def _read_exact(path: str, expected_bytes: int, what: str) -> bytes:
    if not os.path.exists(path):
        raise ContainerFormatError(f"missing file: {path}")
    size = os.path.getsize(path)
    if size != expected_bytes:
        raise ContainerSizeError(
            f"{what} at {path}: {size} bytes on disk, expected {expected_bytes}"
        )
    with open(path, "rb") as f:
        return f.read()


def read_dataset(path: str) -> Dataset:
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise ContainerFormatError(f"missing manifest: {mpath}")
    try:
        with open(mpath, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ContainerFormatError(f"corrupt manifest {mpath}: {e}") from e
    try:
        manifest = DatasetManifest(
            version=int(raw["version"]),
            shape_count=int(raw["shape_count"]),
            voxel_dim=int(raw["voxel_dim"]),
            points_per_shape=int(raw["points_per_shape"]),
            has_labels=bool(raw["has_labels"]),
            category_names=list(raw["category_names"]),
            shape_ids=list(raw["shape_ids"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ContainerFormatError(f"manifest {mpath} missing/bad field: {e}") from e
    if manifest.version != CONTAINER_VERSION:
        raise ContainerVersionError(
            f"container version {manifest.version}, supported {CONTAINER_VERSION}"
        )
    if manifest.shape_count != len(manifest.shape_ids):
        raise ContainerConsistencyError(
            f"manifest shape_count {manifest.shape_count} but "
            f"{len(manifest.shape_ids)} shape_ids"
        )
    shapes_root = os.path.join(path, "shapes")
    present = set(os.listdir(shapes_root)) if os.path.isdir(shapes_root) else set()
    missing = set(manifest.shape_ids) - present
    extra = present - set(manifest.shape_ids)
    if missing:
        raise ContainerConsistencyError(f"records missing for shapes: {sorted(missing)}")
    if extra:
        raise ContainerConsistencyError(f"records present but not in manifest: {sorted(extra)}")

    D = manifest.voxel_dim
    S = manifest.points_per_shape
    shapes = []
    for sid in manifest.shape_ids:
        d = os.path.join(shapes_root, sid)
        vox = np.frombuffer(
            _read_exact(os.path.join(d, "voxels.u8"), D**3, "voxels"), dtype=np.uint8
        ).reshape(D, D, D)
        pts = np.frombuffer(
            _read_exact(os.path.join(d, "points.f32"), S * 12, "points"), dtype="<f4"
        ).reshape(S, 3)
        vals = np.frombuffer(
            _read_exact(os.path.join(d, "values.u8"), S, "values"), dtype=np.uint8
        )
        labels = None
        if manifest.has_labels:
            labels = np.frombuffer(
                _read_exact(os.path.join(d, "labels.u8"), S, "labels"), dtype=np.uint8
            )
        shapes.append(
            ShapeRecord(
                shape_id=sid,
                voxels=VoxelGrid(D, vox.copy()),
                samples=PointSampleSet(pts.copy(), vals.copy(),
                                       labels.copy() if labels is not None else None),
            )
        )
    return Dataset(manifest, shapes)
