import numpy as np
import pytest
from scipy.spatial.distance import pdist

from pugeo import PointCloud, SamplePattern, param_samples, upsample_analytic

from helpers import sphere_cloud


def test_fibonacci_single_sample_radius():
    uv = param_samples(1, SamplePattern("fibonacci_disk", 1.0), 2.0)
    assert abs(np.linalg.norm(uv[0]) - 2.0 * np.sqrt(0.5)) < 1e-12


@pytest.mark.parametrize("kind", ["fibonacci_disk", "jittered_grid"])
@pytest.mark.parametrize("factor", [1, 4, 7, 16])
def test_samples_inside_disk(kind, factor):
    pattern = SamplePattern(kind, radius_scale=0.7)
    rng = np.random.default_rng(0)
    uv = param_samples(factor, pattern, 1.5, rng)
    assert uv.shape == (factor, 2)
    assert (np.linalg.norm(uv, axis=1) <= 0.7 * 1.5 + 1e-12).all()


def test_fibonacci_16_min_spacing():
    uv = param_samples(16, SamplePattern("fibonacci_disk", 1.0), 1.0)
    assert pdist(uv).min() >= 0.3 / np.sqrt(16)


def test_pattern_kind_validated():
    with pytest.raises(ValueError):
        SamplePattern("hexgrid")


def test_plane_cloud_stays_planar():
    g = np.stack(np.meshgrid(np.linspace(0, 1, 12), np.linspace(0, 1, 12)), -1)
    pts = np.column_stack([g.reshape(-1, 2), np.zeros(144)])
    result = upsample_analytic(PointCloud(pts), 4, k=16)
    assert np.abs(result.points[:, 2]).max() < 1e-6
    assert np.abs(np.abs(result.normals[:, 2]) - 1.0).max() < 1e-6


def test_output_counts():
    cloud = sphere_cloud(1000, 2.0, seed=1)
    result = upsample_analytic(cloud, 4, k=16)
    assert result.points.shape == (4000, 3)
    assert result.normals.shape == (4000, 3)
    assert result.coarse_normals.shape == (1000, 3)
    assert result.deltas.shape == (4000,)


def test_parent_grouping():
    cloud = sphere_cloud(200, 1.0, seed=2)
    result = upsample_analytic(cloud, 3, k=16)
    expected = np.repeat(np.arange(200), 3)
    assert np.array_equal(result.parent, expected)


def test_second_order_beats_tangent_plane_on_sphere():
    cloud = sphere_cloud(1000, 2.0, seed=1)
    with_d = upsample_analytic(cloud, 4, k=16)
    without = upsample_analytic(cloud, 4, k=16, displacement=False)
    err_with = np.median(np.abs(np.linalg.norm(with_d.points, axis=1) - 2.0))
    err_without = np.median(np.abs(np.linalg.norm(without.points, axis=1) - 2.0))
    assert err_with <= 0.5 * err_without


def test_reconstruction_identity():
    # x = xhat + delta * t3 exactly, so subtracting delta*t3 lands on the plane
    cloud = sphere_cloud(300, 1.0, seed=3)
    result = upsample_analytic(cloud, 4, k=16)
    for i in (0, 57, 123):
        t3 = result.coarse_normals[i]
        for r in range(4):
            j = i * 4 + r
            xhat = result.points[j] - result.deltas[j] * t3
            residual = (xhat - cloud.points[i]) @ t3
            assert abs(residual) < 1e-7


def test_identity_when_factor_one_radius_zero():
    cloud = sphere_cloud(300, 1.0, seed=4)
    result = upsample_analytic(cloud, 1, k=16,
                               pattern=SamplePattern("fibonacci_disk", 0.0))
    assert np.abs(result.points - cloud.points).max() < 1e-7


def test_output_normals_unit():
    cloud = sphere_cloud(500, 1.5, seed=5)
    result = upsample_analytic(cloud, 4, k=16)
    np.testing.assert_allclose(np.linalg.norm(result.normals, axis=1), 1.0, atol=1e-6)


def test_samples_stay_near_source():
    cloud = sphere_cloud(400, 1.0, seed=6)
    pattern = SamplePattern(radius_scale=0.7)
    result = upsample_analytic(cloud, 4, k=16, pattern=pattern)
    from pugeo.sampling import NeighborIndex

    idx = NeighborIndex(cloud.points).knn_batch(cloud.points, 16)
    for i in range(0, 400, 37):
        d = np.sort(np.linalg.norm(cloud.points[idx[i]] - cloud.points[i], axis=1))
        local_radius = np.median(d[1:5])
        group = result.points[i * 4:(i + 1) * 4]
        deltas = result.deltas[i * 4:(i + 1) * 4]
        bound = 0.7 * local_radius + np.abs(deltas).max() + 1e-9
        assert np.linalg.norm(group - cloud.points[i], axis=1).max() <= bound


def test_requires_enough_points():
    with pytest.raises(ValueError):
        upsample_analytic(PointCloud(np.random.default_rng(0).normal(size=(10, 3))),
                          2, k=16)


def test_displacement_clamped_by_local_radius():
    cloud = sphere_cloud(300, 0.05, seed=7)  # tiny sphere: huge curvature
    result = upsample_analytic(cloud, 4, k=16)
    from pugeo.sampling import NeighborIndex

    idx = NeighborIndex(cloud.points).knn_batch(cloud.points, 16)
    for i in range(0, 300, 29):
        d = np.sort(np.linalg.norm(cloud.points[idx[i]] - cloud.points[i], axis=1))
        local_radius = np.median(d[1:5])
        assert np.abs(result.deltas[i * 4:(i + 1) * 4]).max() <= local_radius + 1e-12


def test_degenerate_line_fallback_counts():
    # collinear cloud: every frame degenerates, but the run completes
    line = np.column_stack([np.linspace(0, 1, 40), np.zeros(40), np.zeros(40)])
    result = upsample_analytic(PointCloud(line), 2, k=8)
    assert result.metadata["degenerate_frames"] == 40
    assert np.all(result.deltas == 0.0)
    np.testing.assert_allclose(result.coarse_normals, np.tile([0, 0, 1.0], (40, 1)))
