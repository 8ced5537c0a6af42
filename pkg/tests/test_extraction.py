import json
import os

import numpy as np
import pytest
import torch

from fieldtree.extraction import (
    Mesh,
    ScalarGrid,
    edge_use_counts,
    eval_union_grid,
    export_hierarchy,
    is_closed,
    label_mesh,
    leaf_field_fn,
    marching_cubes,
    write_obj,
)
from fieldtree.network import GaussianParams, HierarchyNet, gaussian_field
from fieldtree.shapes import cell_centers, clear_boundary, gen_toy_shape, voxelize
from helpers import tiny_config


def _signed_volume(mesh: Mesh) -> float:
    v, t = mesh.vertices, mesh.triangles
    return float(np.einsum("ij,ij->i", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]])).sum() / 6)


def _net(levels=2, **kw):
    net = HierarchyNet(tiny_config(levels=levels, **kw))
    net.eval()
    return net


# -- marching cubes --------------------------------------------------------------


def test_empty_grid_empty_mesh():
    mesh = marching_cubes(np.zeros((16, 16, 16)), 0.5)
    assert mesh.empty
    assert mesh.vertices.shape == (0, 3)


def test_single_cell_octahedron():
    grid = np.zeros((8, 8, 8))
    grid[4, 4, 4] = 1.0
    mesh = marching_cubes(grid, 0.5)
    V, T = len(mesh.vertices), len(mesh.triangles)
    edges, counts = edge_use_counts(mesh)
    E = len(edges)
    assert (V, E, T) == (6, 12, 8)
    assert V - E + T == 2  # Euler characteristic of a sphere
    assert is_closed(mesh)
    assert _signed_volume(mesh) > 0  # outward orientation


def test_no_degenerate_triangles():
    grid = voxelize(gen_toy_shape("chair", 1), 32).occupancy.astype(np.float64)
    mesh = marching_cubes(grid, 0.5)
    t = mesh.triangles
    assert np.all(t[:, 0] != t[:, 1])
    assert np.all(t[:, 1] != t[:, 2])
    assert np.all(t[:, 0] != t[:, 2])


def test_sphere_vertex_error_bound():
    # binary occupancy of a radius-0.3 sphere at 64^3: every extracted vertex
    # within 1.5 cell diagonals of the true surface
    R = 64
    centers = cell_centers(R)
    occ = (np.linalg.norm(centers, axis=1) <= 0.3).astype(np.float64).reshape(R, R, R)
    mesh = marching_cubes(clear_boundary(occ), 0.5)
    assert not mesh.empty
    assert is_closed(mesh)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    cell_diag = np.sqrt(3.0) / R
    assert np.max(np.abs(radii - 0.3)) <= 1.5 * cell_diag
    assert _signed_volume(mesh) == pytest.approx(4 / 3 * np.pi * 0.3**3, rel=0.05)


def test_linear_field_exact_interpolation():
    # axis-aligned linear field: all vertices sit on the iso plane to 1e-5
    R = 32
    axis = (np.arange(R) + 0.5) / R - 0.5
    values = np.broadcast_to(axis[:, None, None] + 0.5, (R, R, R)).copy()
    iso = 0.37
    mesh = marching_cubes(values, iso)
    assert len(mesh.vertices) > 0
    plane_x = iso - 0.5  # world coordinate where field == iso
    assert np.max(np.abs(mesh.vertices[:, 0] - plane_x)) < 1e-5


def test_closed_on_random_smooth_fields():
    rng = np.random.default_rng(0)
    R = 24
    centers = cell_centers(R)
    for _ in range(20):
        k = rng.integers(2, 6)
        mus = rng.uniform(-0.3, 0.3, size=(k, 3))
        rads = rng.uniform(0.05, 0.25, size=(k, 3))
        f = np.zeros(len(centers))
        for mu, r in zip(mus, rads):
            f = np.maximum(
                f, np.exp(-(((centers - mu) / r) ** 2).sum(1) / 2.0)
            )
        grid = clear_boundary(f.reshape(R, R, R))
        mesh = marching_cubes(grid, 0.5)
        assert is_closed(mesh)


def test_rebuild_is_deterministic():
    grid = voxelize(gen_toy_shape("table", 3), 32).occupancy.astype(np.float64)
    a = marching_cubes(grid, 0.5)
    b = marching_cubes(grid, 0.5)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


# -- dense field evaluation -------------------------------------------------------


def test_union_grid_dominates_nodes():
    net = _net()
    vox = torch.zeros(16, 16, 16)
    vox[5:11, 5:11, 5:11] = 1.0
    union = eval_union_grid(net, vox, level=2, resolution=16)
    from fieldtree.extraction import level_grid_from_code

    with torch.no_grad():
        code = net.encode(vox)
    fields = level_grid_from_code(net, code, 2, 16)
    interior = np.s_[1:-1, 1:-1, 1:-1]  # union grid zeroes its boundary layer
    for i in range(fields.shape[0]):
        assert np.all(union.values[interior] >= fields[i][interior] - 1e-7)


def test_union_grid_boundary_zeroed():
    net = _net()
    vox = torch.zeros(16, 16, 16)
    union = eval_union_grid(net, vox, level=1, resolution=16)
    assert union.values[0].max() == 0.0 and union.values[-1].max() == 0.0


def test_scalar_grid_validation():
    with pytest.raises(ValueError):
        ScalarGrid(8, np.full((8, 8, 8), np.nan, dtype=np.float32))


# -- labeling ---------------------------------------------------------------------


def test_label_mesh_two_gaussian_split():
    # constructed parameters: two Gaussians split space at x = 0
    theta_l = GaussianParams(
        s=torch.tensor(1.0), c=torch.tensor([-0.2, 0.0, 0.0]), r=torch.tensor([0.15] * 3)
    )
    theta_r = GaussianParams(
        s=torch.tensor(1.0), c=torch.tensor([0.2, 0.0, 0.0]), r=torch.tensor([0.15] * 3)
    )

    def fields(points):
        return torch.stack(
            [gaussian_field(theta_l, points), gaussian_field(theta_r, points)]
        )

    R = 48
    centers = cell_centers(R)
    grid = fields(torch.from_numpy(centers.astype(np.float32))).numpy()
    union = clear_boundary(grid.max(axis=0).reshape(R, R, R))
    mesh = marching_cubes(union, 0.5)
    label_mesh(mesh, fields, 0.5)
    away = np.abs(mesh.vertices[:, 0]) > 0.05  # off the seam
    labels = mesh.vertex_part[away]
    sides = (mesh.vertices[away, 0] > 0).astype(int)
    assert np.array_equal(labels, sides)


def test_label_mesh_single_dominant_label():
    theta = GaussianParams(
        s=torch.tensor(1.0), c=torch.zeros(3), r=torch.tensor([0.2] * 3)
    )

    def fields(points):
        f = gaussian_field(theta, points)
        return torch.stack([f, 0.1 * f])

    R = 32
    union = clear_boundary(
        fields(torch.from_numpy(cell_centers(R).astype(np.float32)))
        .numpy()
        .max(axis=0)
        .reshape(R, R, R)
    )
    mesh = marching_cubes(union, 0.5)
    label_mesh(mesh, fields, 0.5)
    assert np.all(mesh.vertex_part == 0)


def test_label_invariant_under_vertex_permutation():
    net = _net(levels=1)
    vox = torch.zeros(16, 16, 16)
    vox[4:12, 4:12, 4:12] = 1.0
    with torch.no_grad():
        code = net.encode(vox)
    grid = eval_union_grid(net, vox, 1, 32)
    mesh = marching_cubes(grid, net.config.inside_threshold)
    if mesh.empty:
        pytest.skip("untrained field produced no surface at this threshold")
    label_mesh(mesh, leaf_field_fn(net, code), net.config.inside_threshold)
    perm = np.random.default_rng(0).permutation(len(mesh.vertices))
    inv = np.argsort(perm)
    mesh2 = Mesh(mesh.vertices[perm], inv[mesh.triangles])
    label_mesh(mesh2, leaf_field_fn(net, code), net.config.inside_threshold)
    assert np.array_equal(mesh2.vertex_part, mesh.vertex_part[perm])


# -- export -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_stub(tmp_path_factory):
    # an untrained net exports fine; fields at init form one central blob
    net = HierarchyNet(tiny_config(levels=3))
    net.eval()
    vox = torch.zeros(16, 16, 16)
    vox[4:12, 4:12, 4:12] = 1.0
    return net, vox


def test_export_structure(tmp_path, trained_stub):
    net, vox = trained_stub
    out = str(tmp_path / "exp")
    doc = export_hierarchy(net, vox, out, resolution=24)
    files = sorted(os.listdir(out))
    assert "hierarchy.json" in files
    assert [f"level_{j}.obj" for j in (1, 2, 3)] == [f for f in files if f.endswith(".obj")]
    assert doc["levels"] == 3
    assert len(doc["nodes"]) == 2 + 4 + 8
    leaf_obj = open(os.path.join(out, "level_3.obj")).read()
    assert leaf_obj.count("\ng part_") == 8  # all leaf groups present


def test_export_children_rule(tmp_path, trained_stub):
    net, vox = trained_stub
    out = str(tmp_path / "exp")
    export_hierarchy(net, vox, out, resolution=24)
    doc = json.load(open(os.path.join(out, "hierarchy.json")))
    for node in doc["nodes"]:
        i, j = node["id"]
        if j < doc["levels"]:
            assert node["children"] == [[2 * i - 1, j + 1], [2 * i, j + 1]]
        else:
            assert node["children"] is None
        assert 0.0 <= node["volume"] <= 1.0


def test_export_byte_identical(tmp_path, trained_stub):
    net, vox = trained_stub
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    export_hierarchy(net, vox, out1, resolution=24)
    export_hierarchy(net, vox, out2, resolution=24)
    for f in sorted(os.listdir(out1)):
        b1 = open(os.path.join(out1, f), "rb").read()
        b2 = open(os.path.join(out2, f), "rb").read()
        assert b1 == b2, f


def test_export_single_level(tmp_path, trained_stub):
    net, vox = trained_stub
    out = str(tmp_path / "one")
    doc = export_hierarchy(net, vox, out, resolution=24, only_level=2)
    objs = [f for f in os.listdir(out) if f.endswith(".obj")]
    assert objs == ["level_2.obj"]
    assert len(doc["nodes"]) == 4


def test_obj_vertex_part_comments(tmp_path):
    mesh = Mesh(
        vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        triangles=np.array([[0, 1, 2]]),
        vertex_part=np.array([1, 1, 0]),
    )
    path = str(tmp_path / "m.obj")
    write_obj(path, mesh, n_groups=2, title="test")
    text = open(path).read()
    assert "# vpart 1 1" in text and "# vpart 3 0" in text
    # majority label 1 -> triangle in group part_2 (1-based)
    assert text.index("g part_2") < text.index("f 1 2 3")
