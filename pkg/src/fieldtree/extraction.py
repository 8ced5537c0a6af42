"""Dense field sampling, marching-cubes surface extraction, part labeling, export.

Vertices are deduplicated by the lattice edge they sit on, so neighbouring
cells share vertices exactly and extracted meshes are closed (every undirected
edge borders exactly 2 triangles) whenever the grid boundary sits below the
iso level. Triangle emission follows cell order, vertex numbering follows
lattice-edge order; both are deterministic, so exports are byte-stable.
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch

from .mc_tables import CORNER_PAIRS, TRI_TABLE
from .network import HierarchyNet, classify_points
from .shapes import cell_centers, clear_boundary

# canonical lattice edge for each of the 12 cube edges: (dx, dy, dz, axis)
_EDGE_BASE = np.zeros((12, 3), dtype=np.int64)
_EDGE_AXIS = np.zeros(12, dtype=np.int64)
_CORNER_OFFSET = np.array(
    [
        (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
    ],
    dtype=np.int64,
)
for _e, (_a, _b) in enumerate(CORNER_PAIRS):
    lo, hi = _CORNER_OFFSET[_a], _CORNER_OFFSET[_b]
    if tuple(lo) > tuple(hi):
        lo, hi = hi, lo
    _EDGE_BASE[_e] = lo
    _EDGE_AXIS[_e] = int(np.argmax(hi - lo))

# padded triangle table: (256, 5, 3) edge ids, -1 padding; at most 5 triangles/case
_TRI_ARRAY = np.full((256, 5, 3), -1, dtype=np.int64)
_TRI_COUNT = np.zeros(256, dtype=np.int64)
for _case, _tris in enumerate(TRI_TABLE):
    _TRI_COUNT[_case] = len(_tris) // 3
    for _t in range(len(_tris) // 3):
        _TRI_ARRAY[_case, _t] = _tris[3 * _t : 3 * _t + 3]


@dataclass
class ScalarGrid:
    """R^3 scalar samples at cell centers of the canonical cube, x-major."""

    dim: int
    values: np.ndarray  # (R, R, R) float32

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.shape != (self.dim,) * 3:
            raise ValueError(f"values shape {self.values.shape} != dim {self.dim}^3")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar grid contains non-finite values")


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    vertex_part: Optional[np.ndarray] = None  # (V,) int64, 0-based branch ids

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0


def lattice_to_world(coords: np.ndarray, dim: int) -> np.ndarray:
    """Lattice positions (cell-center index space) -> canonical cube coordinates."""
    return (coords + 0.5) / dim - 0.5


def marching_cubes(grid, iso: float = 0.5) -> Mesh:
    """Table-driven iso-surface extraction with linear edge interpolation.

    A corner counts as inside when its value is strictly greater than iso.
    The mesh is closed and outward-oriented provided every boundary value is
    below iso; an empty mesh is valid output.
    """
    if isinstance(grid, ScalarGrid):
        values = grid.values.astype(np.float64)
    else:
        values = np.asarray(grid, dtype=np.float64)
    R = values.shape[0]
    if values.shape != (R, R, R):
        raise ValueError(f"grid must be cubic, got {values.shape}")
    occ = values > iso
    n = R - 1
    cases = np.zeros((n, n, n), dtype=np.uint16)
    for bit, (dx, dy, dz) in enumerate(_CORNER_OFFSET):
        cases |= occ[dx : n + dx, dy : n + dy, dz : n + dz].astype(np.uint16) << bit
    cells = np.argwhere((cases != 0) & (cases != 255))  # lexicographic order
    if len(cells) == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cell_cases = cases[cells[:, 0], cells[:, 1], cells[:, 2]]

    counts = _TRI_COUNT[cell_cases]
    owner = np.repeat(np.arange(len(cells)), counts)
    slot = np.arange(len(owner)) - np.repeat(
        np.concatenate(([0], np.cumsum(counts)[:-1])), counts
    )
    tri_edges = _TRI_ARRAY[cell_cases[owner], slot]  # (T, 3) edge ids

    # canonical lattice-edge keys for every triangle corner
    base = cells[owner][:, None, :] + _EDGE_BASE[tri_edges]  # (T, 3, 3)
    axis = _EDGE_AXIS[tri_edges]  # (T, 3)
    keys = ((base[..., 0] * R + base[..., 1]) * R + base[..., 2]) * 3 + axis
    uniq, inverse = np.unique(keys.ravel(), return_inverse=True)

    # interpolate one vertex per unique lattice edge
    ax = uniq % 3
    rest = uniq // 3
    ez = rest % R
    ey = (rest // R) % R
    ex = rest // (R * R)
    va = values[ex, ey, ez]
    step = np.zeros((len(uniq), 3), dtype=np.int64)
    step[np.arange(len(uniq)), ax] = 1
    vb = values[ex + step[:, 0], ey + step[:, 1], ez + step[:, 2]]
    t = (iso - va) / (vb - va)
    coords = np.stack([ex, ey, ez], axis=1).astype(np.float64) + step * t[:, None]
    verts = lattice_to_world(coords, R)

    tris = inverse.reshape(-1, 3)[:, [0, 2, 1]]  # flip winding -> outward normals
    return Mesh(verts, np.ascontiguousarray(tris))


def edge_use_counts(mesh: Mesh):
    """(edges, counts): undirected edges and how many triangles use each."""
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    return np.unique(edges, axis=0, return_counts=True)


def is_closed(mesh: Mesh) -> bool:
    """Every undirected edge borders exactly two triangles."""
    if mesh.empty:
        return True
    _, counts = edge_use_counts(mesh)
    return bool(np.all(counts == 2))


def _field_chunks(
    net: HierarchyNet, code: torch.Tensor, points: np.ndarray, level: int, chunk: int = 32768
):
    """Yield (K, chunk) leaf/level field arrays over a long point list."""
    for lo in range(0, len(points), chunk):
        pts = torch.from_numpy(points[lo : lo + chunk].astype(np.float32))
        with torch.no_grad():
            tree = net.forward_from_code(code, pts, max_level=level)
        yield tree.fields(level).numpy()


def level_grid_from_code(
    net: HierarchyNet, code: torch.Tensor, level: int, resolution: int = 64
) -> np.ndarray:
    """All node fields of one level at cell centers: (2^level, R, R, R) float32."""
    pts = cell_centers(resolution)
    parts = [f for f in _field_chunks(net, code, pts, level)]
    fields = np.concatenate(parts, axis=1)
    k = fields.shape[0]
    return fields.reshape(k, resolution, resolution, resolution)


def union_grid_from_code(
    net: HierarchyNet, code: torch.Tensor, level: int, resolution: int = 64
) -> ScalarGrid:
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    fields = level_grid_from_code(net, code, level, resolution)
    union = fields.max(axis=0)
    return ScalarGrid(resolution, clear_boundary(union))


def eval_union_grid(
    net: HierarchyNet, vox: torch.Tensor, level: int, resolution: int = 64
) -> ScalarGrid:
    """max_i f_{i,level} at every cell center; boundary layer zeroed."""
    with torch.no_grad():
        code = net.encode(vox)
    return union_grid_from_code(net, code, level, resolution)


def label_mesh(mesh: Mesh, field_fn: Callable, tau: float) -> Mesh:
    """Attach a part index to every vertex.

    field_fn maps an (M, 3) float32 tensor of positions to a (K, M) field
    tensor. Vertices whose max field is <= tau (they sit fractionally below
    the iso level) inherit the label of the nearest labeled vertex along mesh
    edges; if no vertex clears tau the raw argmax is used everywhere.
    """
    if mesh.empty:
        mesh.vertex_part = np.zeros(len(mesh.vertices), dtype=np.int64)
        return mesh
    with torch.no_grad():
        fields = field_fn(torch.from_numpy(mesh.vertices.astype(np.float32)))
    fields = fields.detach().numpy()
    labels = np.argmax(fields, axis=0).astype(np.int64)
    best = fields[labels, np.arange(fields.shape[1])]
    outside = best <= tau
    if outside.all():
        mesh.vertex_part = labels
        return mesh
    if outside.any():
        adj = [[] for _ in range(len(mesh.vertices))]
        for a, b, c in mesh.triangles:
            adj[a] += [b, c]
            adj[b] += [a, c]
            adj[c] += [a, b]
        queue = deque(int(v) for v in np.nonzero(~outside)[0])
        seen = ~outside
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    labels[w] = labels[v]
                    queue.append(w)
        # isolated unlabeled components keep their argmax labels
    mesh.vertex_part = labels
    return mesh


def leaf_field_fn(net: HierarchyNet, code: torch.Tensor) -> Callable:
    level = net.leaf_level()

    def fn(points: torch.Tensor) -> torch.Tensor:
        return net.forward_from_code(code, points, max_level=level).fields(level)

    return fn


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_obj(path: str, mesh: Mesh, n_groups: int, title: str) -> None:
    """Wavefront-style text export with per-vertex part comments and one
    `g part_<i>` group per branch (1-based, all groups present even if empty).
    Triangles join the majority part of their vertices, ties to the lowest."""
    lines = [f"# {title}", f"# vertices {len(mesh.vertices)} triangles {len(mesh.triangles)}"]
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    part = mesh.vertex_part
    if part is None:
        part = np.zeros(len(mesh.vertices), dtype=np.int64)
    for i, p in enumerate(part, start=1):
        lines.append(f"# vpart {i} {int(p)}")
    tri_group = np.zeros(len(mesh.triangles), dtype=np.int64)
    for t, (a, b, c) in enumerate(mesh.triangles):
        votes = np.bincount([part[a], part[b], part[c]], minlength=n_groups)
        tri_group[t] = int(np.argmax(votes))
    for g in range(n_groups):
        lines.append(f"g part_{g + 1}")
        for t in np.nonzero(tri_group == g)[0]:
            a, b, c = mesh.triangles[t] + 1
            lines.append(f"f {a} {b} {c}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def export_hierarchy(
    net: HierarchyNet,
    vox: torch.Tensor,
    out_dir: str,
    resolution: int = 64,
    tau: Optional[float] = None,
    only_level: Optional[int] = None,
) -> dict:
    """Write hierarchy.json plus one labeled surface file per level.

    hierarchy.json lists every node (1-based ids), its children under the
    (2i-1, 2i) rule, and its occupied-volume estimate (fraction of cube cells
    with field value > tau).
    """
    with torch.no_grad():
        code = net.encode(vox)
    return export_hierarchy_from_code(net, code, out_dir, resolution, tau, only_level)


def export_hierarchy_from_code(
    net: HierarchyNet,
    code: torch.Tensor,
    out_dir: str,
    resolution: int = 64,
    tau: Optional[float] = None,
    only_level: Optional[int] = None,
) -> dict:
    tau = net.config.inside_threshold if tau is None else tau
    os.makedirs(out_dir, exist_ok=True)
    n_levels = net.leaf_level()
    if only_level is not None and not 1 <= only_level <= n_levels:
        raise ValueError(f"level {only_level} out of range 1..{n_levels}")
    levels = [only_level] if only_level else range(1, n_levels + 1)
    nodes = []
    for j in levels:
        pts = cell_centers(resolution)
        fields = np.concatenate(
            [f for f in _field_chunks(net, code, pts, j)], axis=1
        )
        k = fields.shape[0]
        union = fields.max(axis=0).reshape((resolution,) * 3)
        grid = ScalarGrid(resolution, clear_boundary(union))
        mesh = marching_cubes(grid, iso=tau)

        def level_fields(points, _j=j):
            return net.forward_from_code(code, points, max_level=_j).fields(_j)

        label_mesh(mesh, level_fields, tau)
        fname = f"level_{j}.obj"
        write_obj(
            os.path.join(out_dir, fname), mesh, k,
            f"level {j} union surface, iso {_fmt(tau)}",
        )
        volumes = (fields > tau).mean(axis=1)
        for i in range(1, k + 1):
            node = {
                "id": [i, j],
                "children": (
                    [[2 * i - 1, j + 1], [2 * i, j + 1]] if j < n_levels else None
                ),
                "volume": float(f"{volumes[i - 1]:.6g}"),
                "mesh": fname,
                "group": f"part_{i}",
            }
            nodes.append(node)
    doc = {
        "levels": n_levels,
        "resolution": resolution,
        "iso": float(f"{tau:.6g}"),
        "nodes": nodes,
    }
    with open(os.path.join(out_dir, "hierarchy.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc
