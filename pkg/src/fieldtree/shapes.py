"""Procedural toy shapes with analytic occupancy, voxelization, and point sampling.

Shapes live in the canonical cube [-0.5, 0.5]^3 and are unions of axis-aligned
boxes and ellipsoids. Three categories (table, chair, plane) mimic furniture
semantics so that part labels have meaningful names. Every generated shape is
a pure function of (category, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

OUTSIDE_LABEL = 255

CATEGORIES = ("table", "chair", "plane")

# label id -> human name, per category
CATEGORY_LABELS = {
    "table": ("top", "support"),
    "chair": ("back", "seat", "leg"),
    "plane": ("body", "wing", "tail"),
}

_CATEGORY_IDS = {name: i for i, name in enumerate(CATEGORIES)}

# Generated geometry stays inside this bound so that voxel boundary-layer
# clearing (outermost cell ring forced to 0) never clips the shape at D >= 16.
_EXTENT_LIMIT = 0.44


@dataclass(frozen=True)
class Primitive:
    kind: str  # "box" | "ellipsoid"
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    gt_label: int


@dataclass(frozen=True)
class ToyShapeSpec:
    category: str
    primitives: tuple[Primitive, ...]


@dataclass
class VoxelGrid:
    """D^3 binary occupancy, x-major layout: flat index = (x*D + y)*D + z."""

    dim: int
    occupancy: np.ndarray  # (D, D, D) uint8, C-contiguous

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if self.occupancy.shape != (self.dim,) * 3:
            raise ValueError(
                f"occupancy shape {self.occupancy.shape} != dim {self.dim}^3"
            )


@dataclass
class PointSampleSet:
    points: np.ndarray  # (S, 3) float32, coordinates in [-0.5, 0.5]^3
    values: np.ndarray  # (S,) uint8 in {0, 1}
    labels: Optional[np.ndarray] = None  # (S,) uint8, OUTSIDE_LABEL outside

    def __len__(self) -> int:
        return len(self.points)


def _u(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo + (hi - lo) * rng.random())


def _box(center, half, label) -> Primitive:
    return Primitive("box", tuple(map(float, center)), tuple(map(float, half)), label)


def _gen_table(rng: np.random.Generator) -> tuple[Primitive, ...]:
    # top (label 0) + 4 legs (label 1); legs end exactly at the top's underside
    hx = _u(rng, 0.25, 0.40)
    hz = _u(rng, 0.25, 0.40)
    hy = _u(rng, 0.02, 0.05)          # top half-thickness
    lh = _u(rng, 0.015, 0.04)         # leg half cross-section
    leg_len = _u(rng, 0.24, 0.42)
    height = leg_len + 2.0 * hy
    y0 = -height / 2.0                # table bottom
    top = _box((0.0, y0 + leg_len + hy, 0.0), (hx, hy, hz), 0)
    legs = []
    cx = hx - lh - 0.02
    cz = hz - lh - 0.02
    for sx in (-1.0, 1.0):
        for sz in (-1.0, 1.0):
            legs.append(
                _box((sx * cx, y0 + leg_len / 2.0, sz * cz), (lh, leg_len / 2.0, lh), 1)
            )
    return (top, *legs)


def _gen_chair(rng: np.random.Generator) -> tuple[Primitive, ...]:
    # back (0), seat (1), 4 legs (2); back rests on the seat, legs under it
    hx = _u(rng, 0.16, 0.28)
    hz = _u(rng, 0.16, 0.28)
    hy = _u(rng, 0.02, 0.04)          # seat half-thickness
    lh = _u(rng, 0.015, 0.035)
    leg_len = _u(rng, 0.18, 0.30)
    bt = _u(rng, 0.015, 0.035)        # back half-thickness (z)
    bh = _u(rng, 0.12, 0.22)          # back half-height
    height = leg_len + 2.0 * hy + 2.0 * bh
    y0 = -height / 2.0
    seat_cy = y0 + leg_len + hy
    back = _box((0.0, seat_cy + hy + bh, -(hz - bt)), (hx, bh, bt), 0)
    seat = _box((0.0, seat_cy, 0.0), (hx, hy, hz), 1)
    legs = []
    cx = hx - lh - 0.02
    cz = hz - lh - 0.02
    for sx in (-1.0, 1.0):
        for sz in (-1.0, 1.0):
            legs.append(
                _box((sx * cx, y0 + leg_len / 2.0, sz * cz), (lh, leg_len / 2.0, lh), 2)
            )
    return (back, seat, *legs)


def _gen_plane(rng: np.random.Generator) -> tuple[Primitive, ...]:
    # ellipsoid body (0), 2 wings (1), tail fin (2); wings/tail overlap the body
    bx = _u(rng, 0.28, 0.40)
    by = _u(rng, 0.035, 0.06)
    bz = _u(rng, 0.035, 0.06)
    body = Primitive("ellipsoid", (0.0, 0.0, 0.0), (bx, by, bz), 0)
    wc = _u(rng, 0.05, 0.10)          # wing half-chord (x)
    wt = _u(rng, 0.008, 0.018)        # wing half-thickness (y)
    ws = _u(rng, 0.12, 0.19)          # wing half-span (z)
    wx = _u(rng, -0.05, 0.10)
    zc = ws + bz / 2.0                # inner edge reaches into the body
    wing_l = _box((wx, 0.0, -zc), (wc, wt, ws), 1)
    wing_r = _box((wx, 0.0, zc), (wc, wt, ws), 1)
    tc = _u(rng, 0.03, 0.06)          # tail half-chord (x)
    th = _u(rng, 0.04, 0.08)          # tail half-height
    tt = _u(rng, 0.008, 0.018)        # tail half-thickness (z)
    tail = _box((-(bx - tc), 0.5 * th, 0.0), (tc, th, tt), 2)
    return (body, wing_l, wing_r, tail)


_GENERATORS = {"table": _gen_table, "chair": _gen_chair, "plane": _gen_plane}


def gen_toy_shape(category: str, seed: int) -> ToyShapeSpec:
    """Generate one toy shape deterministically from (category, seed)."""
    if category not in _GENERATORS:
        raise ValueError(f"unknown category {category!r}, expected one of {CATEGORIES}")
    rng = np.random.default_rng([_CATEGORY_IDS[category], int(seed)])
    prims = _GENERATORS[category](rng)
    for p in prims:
        for c, h in zip(p.center, p.half_extents):
            assert abs(c) + h <= _EXTENT_LIMIT + 1e-12, "primitive escapes safe extent"
    return ToyShapeSpec(category, prims)


def occupancy_values(
    spec: ToyShapeSpec, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized membership test.

    Returns (values, labels): values in {0, 1}; labels hold the gt_label of the
    containing primitive (lowest primitive index wins on overlap) and
    OUTSIDE_LABEL where no primitive contains the point. Box membership uses
    closed intervals; ellipsoid membership is sum(((p - c)/e)^2) <= 1.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    values = np.zeros(len(pts), dtype=np.uint8)
    labels = np.full(len(pts), OUTSIDE_LABEL, dtype=np.uint8)
    for prim in spec.primitives:
        c = np.asarray(prim.center)
        h = np.asarray(prim.half_extents)
        if prim.kind == "box":
            inside = np.all(np.abs(pts - c) <= h, axis=1)
        elif prim.kind == "ellipsoid":
            inside = np.sum(((pts - c) / h) ** 2, axis=1) <= 1.0
        else:
            raise ValueError(f"unknown primitive kind {prim.kind!r}")
        values[inside] = 1
        unset = inside & (labels == OUTSIDE_LABEL)
        labels[unset] = prim.gt_label
    return values, labels


def occupancy(spec: ToyShapeSpec, p) -> int:
    """Ground-truth occupancy of a single point: 1 inside the union, else 0."""
    values, _ = occupancy_values(spec, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return int(values[0])


def cell_centers(dim: int) -> np.ndarray:
    """Centers of a dim^3 lattice over the canonical cube, x-major order."""
    axis = (np.arange(dim, dtype=np.float64) + 0.5) / dim - 0.5
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def clear_boundary(grid: np.ndarray) -> np.ndarray:
    """Zero the outermost voxel layer in place (keeps extracted surfaces closed)."""
    grid[0, :, :] = 0
    grid[-1, :, :] = 0
    grid[:, 0, :] = 0
    grid[:, -1, :] = 0
    grid[:, :, 0] = 0
    grid[:, :, -1] = 0
    return grid


def voxelize(spec: ToyShapeSpec, dim: int) -> VoxelGrid:
    """Occupancy sampled at cell centers; boundary layer forced empty."""
    if dim < 8:
        raise ValueError(f"voxel dim must be >= 8, got {dim}")
    values, _ = occupancy_values(spec, cell_centers(dim))
    grid = values.reshape(dim, dim, dim)
    return VoxelGrid(dim, clear_boundary(grid))


def sample_points(spec: ToyShapeSpec, grid_res: int, seed: int) -> PointSampleSet:
    """Jittered-grid point samples with ground-truth values and part labels.

    One sample per cell of a grid_res^3 lattice, uniform within its cell, so
    the union of samples is uniform over the cube with stratified coverage.
    Values/labels are computed from the float32-rounded coordinates that get
    stored, keeping value == occupancy(stored point) exact.
    """
    if grid_res not in (16, 32, 64):
        raise ValueError(f"grid_res must be one of 16, 32, 64, got {grid_res}")
    rng = np.random.default_rng([int(grid_res), int(seed)])
    centers = cell_centers(grid_res)
    jitter = (rng.random((len(centers), 3)) - 0.5) / grid_res
    points = (centers + jitter).astype(np.float32)
    values, labels = occupancy_values(spec, points.astype(np.float64))
    return PointSampleSet(points=points, values=values, labels=labels)


def union_volume(spec: ToyShapeSpec) -> float:
    """Exact union volume for table/chair specs (their primitives are disjoint
    up to measure-zero tangency). Raises for planes, whose wings overlap the
    body without a closed-form intersection volume."""
    if spec.category == "plane":
        raise ValueError("plane specs have no closed-form union volume")
    total = 0.0
    for p in spec.primitives:
        hx, hy, hz = p.half_extents
        if p.kind == "box":
            total += 8.0 * hx * hy * hz
        else:
            total += 4.0 / 3.0 * math.pi * hx * hy * hz
    return total
