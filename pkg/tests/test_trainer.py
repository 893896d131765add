import io
import json
import math

import numpy as np
import pytest

from pugeo import (LossWeights, PointCloud, PUGeoConfig, PUGeoNet, TrainConfig, chamfer,
                   evaluate, poisson_disk_sample)
from pugeo.errors import TrainingDiverged
from pugeo.metrics import report_metrics
from pugeo.trainer import (TrainExample, augment_example, build_dataset,
                           scale_to_unit_cube, train, upsample_cloud)

from helpers import cube_mesh, icosphere, sphere_cloud, unit_rows

TINY_MODEL = dict(factor=4, patch_size=64, k=6, feature_widths=(16, 32),
                  hr_hidden=16, f1_hidden=32, f2_hidden=32, f3_hidden=16, f4_hidden=16)


def _toy_example(seed=0, n=16, factor=2):
    rng = np.random.default_rng(seed)
    return TrainExample(
        sparse_points=rng.normal(size=(n, 3)),
        sparse_normals=unit_rows(rng.normal(size=(n, 3))),
        dense_points=rng.normal(size=(factor * n, 3)),
        dense_normals=unit_rows(rng.normal(size=(factor * n, 3))))


# ---------------------------------------------------------------------------
# dataset construction


def test_scale_to_unit_cube():
    mesh = scale_to_unit_cube(cube_mesh(side=7.0))
    extent = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    assert abs(extent.max() - 1.0) < 1e-12
    center = 0.5 * (mesh.vertices.max(axis=0) + mesh.vertices.min(axis=0))
    assert np.abs(center).max() < 1e-12


def test_build_dataset_counts():
    examples = build_dataset([icosphere(2)], m=512, factor=4, patch_size=256, seed=0,
                             coverage=3.0)
    assert len(examples) == math.ceil(3.0 * 512 / 256)
    for ex in examples:
        assert ex.sparse_points.shape == (256, 3)
        assert ex.dense_points.shape == (1024, 3)
        assert ex.sparse_normals.shape == (256, 3)
        assert ex.dense_normals.shape == (1024, 3)


def test_build_dataset_normalization_shared():
    examples = build_dataset([icosphere(2)], m=256, factor=2, patch_size=128, seed=1,
                             coverage=1.0)
    for ex in examples:
        # sparse patch is unit-radius by construction; dense shares the transform
        assert abs(np.linalg.norm(ex.sparse_points, axis=1).max() - 1.0) < 1e-6
        assert np.abs(ex.sparse_points.mean(axis=0)).max() < 1e-6
        assert np.linalg.norm(ex.dense_points, axis=1).max() < 2.0


def test_build_dataset_deterministic():
    a = build_dataset([icosphere(2)], m=128, factor=2, patch_size=64, seed=7)
    b = build_dataset([icosphere(2)], m=128, factor=2, patch_size=64, seed=7)
    assert len(a) == len(b)
    for ea, eb in zip(a, b):
        assert np.array_equal(ea.sparse_points, eb.sparse_points)
        assert np.array_equal(ea.dense_points, eb.dense_points)


def test_build_dataset_noise_only_on_sparse():
    clean = build_dataset([icosphere(2)], m=128, factor=2, patch_size=64, seed=3)
    noisy = build_dataset([icosphere(2)], m=128, factor=2, patch_size=64, seed=3,
                          noise_sigma=0.01)
    assert not np.array_equal(clean[0].sparse_points, noisy[0].sparse_points)


# ---------------------------------------------------------------------------
# augmentation of paired examples


def test_augment_example_consistent_rotation():
    ex = _toy_example(1)
    rng = np.random.default_rng(5)
    out = augment_example(ex, rng, jitter_sigma=0.0)
    # pairwise distances between dense points scale uniformly
    from scipy.spatial.distance import pdist

    ratio = pdist(out.dense_points) / pdist(ex.dense_points)
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    # normals stay unit and follow the same rotation as the points
    np.testing.assert_allclose(np.linalg.norm(out.sparse_normals, axis=1), 1.0,
                               atol=1e-9)
    dots_before = np.einsum("ij,ij->i", ex.sparse_normals, ex.sparse_points)
    dots_after = np.einsum("ij,ij->i", out.sparse_normals,
                           out.sparse_points / ratio[0])
    np.testing.assert_allclose(dots_before, dots_after, atol=1e-9)


# ---------------------------------------------------------------------------
# training loop


def test_train_zero_epochs_keeps_parameters():
    cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=0)
    before = [t.data.copy() for _, t in net.named_params()]
    train(TrainConfig(factor=2, patch_size=16, epochs=0, seed=0), [_toy_example()], net)
    for old, (_, t) in zip(before, net.named_params()):
        assert np.array_equal(old, t.data)


def test_train_deterministic_bitwise():
    def run():
        cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                          hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8,
                          f4_hidden=8)
        net = PUGeoNet(cfg, seed=1)
        dataset = [_toy_example(s) for s in range(3)]
        train(TrainConfig(factor=2, patch_size=16, batch_size=2, epochs=3, seed=9),
              dataset, net)
        return [t.data.copy() for _, t in net.named_params()]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_train_emits_json_log_per_epoch():
    cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=2)
    stream = io.StringIO()
    _, history = train(TrainConfig(factor=2, patch_size=16, epochs=4, seed=0),
                       [_toy_example()], net, log_stream=stream)
    lines = [json.loads(line) for line in stream.getvalue().strip().split("\n")]
    assert len(lines) == 4 == len(history)
    for record in lines:
        assert set(record) == {"epoch", "l_total", "l_cd", "l_coarse", "l_refined"}
        assert np.isfinite(record["l_total"])


def test_train_loss_decreases_on_toy_patch():
    cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=3)
    _, history = train(TrainConfig(factor=2, patch_size=16, epochs=60, seed=0,
                                   augment=False, lr=0.003), [_toy_example(4)], net)
    assert history[-1]["l_total"] < history[0]["l_total"]


def test_train_diverges_with_absurd_lr():
    cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=0)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged) as info:
        train(TrainConfig(factor=2, patch_size=16, batch_size=1, epochs=50, lr=1e8,
                          seed=0), [_toy_example(5)], net)
    assert "step" in info.value.diagnostics
    assert "grad_norms" in info.value.diagnostics


def test_train_checkpoints_written(tmp_path):
    cfg = PUGeoConfig(factor=2, patch_size=16, k=4, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=0)
    train(TrainConfig(factor=2, patch_size=16, epochs=4, seed=0, checkpoint_every=2),
          [_toy_example()], net, checkpoint_dir=str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["checkpoint_epoch0002.pugeo", "checkpoint_epoch0004.pugeo",
                     "checkpoint_final.pugeo"]


# ---------------------------------------------------------------------------
# evaluation pipeline


def test_evaluate_ground_truth_against_itself():
    mesh = icosphere(2)
    dense = poisson_disk_sample(mesh, 256, seed=0)
    report = report_metrics(dense, dense, mesh)
    assert report.cd == 0.0 and report.hd == 0.0 and report.jsd == 0.0


def test_upsample_cloud_exact_count_and_determinism():
    cloud = sphere_cloud(300, 1.0, seed=0)
    a = upsample_cloud(cloud, 4, method="analytic", k=16, patch_size=100, coverage=2.0)
    b = upsample_cloud(cloud, 4, method="analytic", k=16, patch_size=100, coverage=2.0)
    assert len(a) == 1200
    assert np.array_equal(a.points, b.points)


def test_evaluate_analytic_beats_zero_displacement_on_sphere():
    mesh = icosphere(3, radius=2.0)
    cloud = sphere_cloud(600, 2.0, seed=1)
    gt_dense = sphere_cloud(2400, 2.0, seed=2)
    with_d = evaluate(cloud, gt_dense, mesh, factor=4, method="analytic", k=16,
                      patch_size=128, coverage=2.0)
    without = evaluate(cloud, gt_dense, mesh, factor=4, method="analytic", k=16,
                       patch_size=128, coverage=2.0, displacement=False)
    assert with_d.cd < without.cd


def test_evaluate_report_schema():
    mesh = icosphere(2)
    cloud = PointCloud(*(lambda c: (c.points, c.normals))(poisson_disk_sample(mesh, 128, 3)))
    gt_dense = poisson_disk_sample(mesh, 256, seed=4)
    report = evaluate(cloud, gt_dense, mesh, factor=2, method="analytic", k=12,
                      patch_size=64, coverage=2.0)
    data = report.to_dict()
    assert {"cd", "hd", "jsd", "p2f_mean", "p2f_std"} <= set(data)
    assert data["pred_count"] == 256


def test_model_method_through_pipeline():
    cfg = PUGeoConfig(factor=2, patch_size=32, k=6, feature_widths=(8, 8),
                      hr_hidden=8, f1_hidden=8, f2_hidden=8, f3_hidden=8, f4_hidden=8)
    net = PUGeoNet(cfg, seed=0)
    cloud = sphere_cloud(128, 1.0, seed=5)
    fused = upsample_cloud(cloud, 2, method="model", model=net, coverage=2.0)
    assert len(fused) == 256
    assert fused.normals is not None
