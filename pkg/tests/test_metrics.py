import numpy as np
import pytest

from pugeo import (TriangleMesh, chamfer, metric_hd, metric_jsd, metric_p2f,
                   poisson_disk_sample, surface_compare)
from pugeo.bvh import TriangleBVH, brute_force_mesh_distance, point_to_triangles
from pugeo.metrics import MetricReport, report_metrics

from helpers import cube_mesh, icosphere, unit_square_mesh


# ---------------------------------------------------------------------------
# Hausdorff


def test_hd_identical_zero():
    pts = np.random.default_rng(0).normal(size=(25, 3))
    assert metric_hd(pts, pts) == 0.0


def test_hd_hand_value():
    x = np.array([[0, 0, 0], [1, 0, 0]], float)
    y = np.array([[0, 0, 0], [0, 1, 0]], float)
    assert abs(metric_hd(x, y) - 1.0) < 1e-12


def test_hd_outlier_dominates():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 0.1, size=(30, 3))
    y = x.copy()
    x = np.concatenate([x, [[10.0, 0, 0]]])
    d = metric_hd(x, y)
    assert abs(d - np.linalg.norm(y - [10.0, 0, 0], axis=1).min()) < 1e-12
    assert d > 9.5


def test_hd_symmetric():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(20, 3)), rng.normal(size=(25, 3))
    assert metric_hd(x, y) == metric_hd(y, x)


# ---------------------------------------------------------------------------
# JSD


def test_jsd_identical_zero():
    pts = np.random.default_rng(3).normal(size=(100, 3))
    assert metric_jsd(pts, pts) == 0.0


def test_jsd_disjoint_is_ln2():
    x = np.random.default_rng(4).uniform(0, 1, size=(200, 3))
    y = x + 50.0  # far apart: no shared voxels
    assert abs(metric_jsd(x, y) - np.log(2.0)) < 1e-9


def test_jsd_symmetric():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(80, 3)), rng.normal(size=(90, 3))
    assert abs(metric_jsd(x, y) - metric_jsd(y, x)) < 1e-12


def test_jsd_nonnegative():
    rng = np.random.default_rng(6)
    for _ in range(5):
        x, y = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
        assert metric_jsd(x, y) >= 0.0


# ---------------------------------------------------------------------------
# point-to-triangle distance and BVH


def test_point_on_surface_zero_distance():
    mesh = unit_square_mesh()
    assert brute_force_mesh_distance([0.25, 0.25, 0.0], mesh) < 1e-12


def test_point_above_triangle_interior():
    mesh = unit_square_mesh()
    assert abs(brute_force_mesh_distance([0.25, 0.25, 1.0], mesh) - 1.0) < 1e-12


def test_point_beyond_edge_uses_segment():
    mesh = unit_square_mesh()
    # beyond the x=1 edge: closest point is (1, 0.5, 0)
    d = brute_force_mesh_distance([2.0, 0.5, 0.3], mesh)
    assert abs(d - np.sqrt(1.0 + 0.09)) < 1e-12


def test_point_beyond_vertex_uses_vertex():
    mesh = unit_square_mesh()
    d = brute_force_mesh_distance([-1.0, -1.0, 0.0], mesh)
    assert abs(d - np.sqrt(2.0)) < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_bvh_equals_brute_force_bitwise(seed):
    rng = np.random.default_rng(seed)
    verts = rng.normal(size=(60, 3))
    tris = rng.integers(0, 60, size=(50, 3))
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    mesh = TriangleMesh(verts, tris[keep])
    bvh = TriangleBVH(mesh)
    queries = rng.normal(size=(40, 3)) * 2
    for q in queries:
        assert bvh.distance(q) == brute_force_mesh_distance(q, mesh)


def test_point_to_triangles_vectorized_consistency():
    rng = np.random.default_rng(11)
    a, b, c = rng.normal(size=(3, 16, 3))
    p = rng.normal(size=3)
    batch = point_to_triangles(p, a, b, c)
    singles = [point_to_triangles(p, a[i:i + 1], b[i:i + 1], c[i:i + 1])[0]
               for i in range(16)]
    np.testing.assert_array_equal(batch, singles)


# ---------------------------------------------------------------------------
# P2F


def test_p2f_points_on_mesh():
    mesh = cube_mesh()
    cloud = poisson_disk_sample(mesh, 60, seed=0)
    mean, std = metric_p2f(cloud.points, mesh)
    assert mean < 1e-9
    assert std < 1e-9


def test_p2f_constant_offset():
    mesh = unit_square_mesh()
    pts = np.array([[0.3, 0.3, 0.5], [0.6, 0.2, 0.5], [0.5, 0.8, 0.5]])
    mean, std = metric_p2f(pts, mesh)
    assert abs(mean - 0.5) < 1e-12
    assert std < 1e-12


def test_p2f_empty_mesh_raises():
    mesh = TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError):
        metric_p2f(np.zeros((1, 3)), mesh)


# ---------------------------------------------------------------------------
# surface comparison


def test_surface_compare_same_mesh_noise_floor():
    mesh = icosphere(2)
    cd, hd, jsd = surface_compare(mesh, mesh, n=400, seed=0)
    # independent samplings: nonzero, but below twice the mean sample spacing
    areas = 0.5 * np.linalg.norm(
        np.cross(mesh.vertices[mesh.triangles[:, 1]] - mesh.vertices[mesh.triangles[:, 0]],
                 mesh.vertices[mesh.triangles[:, 2]] - mesh.vertices[mesh.triangles[:, 0]]),
        axis=1)
    spacing = np.sqrt(areas.sum() / 400)
    assert 0.0 < cd < 2.0 * spacing
    assert jsd >= 0.0


def test_identical_sampler_state_gives_zero_cd():
    mesh = icosphere(2)
    a = poisson_disk_sample(mesh, 200, seed=5)
    b = poisson_disk_sample(mesh, 200, seed=5)
    assert chamfer(a.points, b.points) == 0.0


def test_surface_compare_translation_lower_bound():
    mesh = icosphere(2)
    shift = np.array([3.0, 0.0, 0.0])
    moved = TriangleMesh(mesh.vertices + shift, mesh.triangles.copy(),
                         mesh.normals.copy())
    cd, hd, jsd = surface_compare(mesh, moved, n=300, seed=1)
    areas = 0.5 * np.linalg.norm(
        np.cross(mesh.vertices[mesh.triangles[:, 1]] - mesh.vertices[mesh.triangles[:, 0]],
                 mesh.vertices[mesh.triangles[:, 2]] - mesh.vertices[mesh.triangles[:, 0]]),
        axis=1)
    spacing = np.sqrt(areas.sum() / 300)
    assert hd >= np.linalg.norm(shift) - 2.0 * spacing


def test_report_metrics_fields():
    mesh = icosphere(2)
    dense = poisson_disk_sample(mesh, 300, seed=2)
    report = report_metrics(dense, dense, mesh, factor=4, inputs={"pred": "x.xyz"})
    data = report.to_dict()
    for key in ("cd", "hd", "jsd", "p2f_mean", "p2f_std"):
        assert key in data
    assert data["cd"] == 0.0 and data["hd"] == 0.0 and data["jsd"] == 0.0
    assert data["factor"] == 4
    assert report.pred_count == 300
