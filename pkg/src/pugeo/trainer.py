"""Dataset construction from meshes and the end-to-end training loop.

A training example pairs a sparse patch (network input, with ground-truth
normals as supervision) with the dense patch covering the same region,
both normalized by the sparse patch's transform.  Training minimizes
alpha*CD + beta*coarse-normal + gamma*refined-normal with Adam.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .analytic import SamplePattern, upsample_analytic
from .errors import TrainingDiverged
from .io import PointCloud, TriangleMesh
from .losses import (LossWeights, chamfer_loss, coarse_normal_loss_graph,
                     refined_normal_loss_graph, total_loss_graph)
from .metrics import MetricReport, report_metrics
from .model import PUGeoNet, save_model
from .sampling import (AugmentParams, NeighborIndex, extract_patches,
                       farthest_point_sample, fuse_patches, poisson_disk_sample)


@dataclass
class TrainExample:
    """A sparse/dense patch pair sharing one normalization transform."""

    sparse_points: np.ndarray    # (N, 3)
    sparse_normals: np.ndarray   # (N, 3)
    dense_points: np.ndarray     # (R*N, 3)
    dense_normals: np.ndarray    # (R*N, 3)
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0
    seed_index: int = 0


@dataclass
class TrainConfig:
    factor: int = 4
    patch_size: int = 256
    batch_size: int = 8
    epochs: int = 800
    lr: float = 0.001
    seed: int = 42
    weights: LossWeights = field(default_factory=LossWeights)
    augment: bool = True
    checkpoint_every: int = 50
    normal_reduction: str = "sum"  # "mean" rebalances beta/gamma against alpha

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.normal_reduction not in ("sum", "mean"):
            raise ValueError("normal_reduction must be 'sum' or 'mean'")


def scale_to_unit_cube(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale its longest side to 1."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = float((hi - lo).max())
    scale = 1.0 / extent if extent > 0 else 1.0
    return TriangleMesh((mesh.vertices - center) * scale, mesh.triangles.copy(),
                        mesh.normals.copy() if mesh.normals is not None else None)


def build_dataset(meshes: list[TriangleMesh], m: int, factor: int, patch_size: int,
                  seed: int, coverage: float = 3.0, noise_sigma: float = 0.0,
                  random_patches: bool = False) -> list[TrainExample]:
    """Sample each mesh into sparse/dense clouds and cut matched patches.

    Per mesh: scale into the unit cube, Poisson-disk sample m sparse and
    factor*m dense points (with mesh normals), pick ceil(coverage*m/N)
    patch seeds by FPS (or uniformly at random with random_patches), and
    cut the sparse kNN(N) and dense kNN(R*N) patches around each seed,
    both normalized by the sparse patch's centroid and scale.  noise_sigma
    adds Gaussian noise (unit-cube units) to the sparse cloud only.
    """
    examples: list[TrainExample] = []
    for mesh_index, mesh in enumerate(meshes):
        mesh = scale_to_unit_cube(mesh)
        base = seed + 7919 * mesh_index
        sparse = poisson_disk_sample(mesh, m, base)
        dense = poisson_disk_sample(mesh, factor * m, base + 1)
        rng = np.random.default_rng(base + 2)
        if noise_sigma > 0.0:
            sparse = PointCloud(sparse.points + rng.normal(scale=noise_sigma,
                                                           size=sparse.points.shape),
                                sparse.normals)
        n_seeds = min(m, math.ceil(coverage * m / patch_size))
        if random_patches:
            seeds = rng.choice(m, size=n_seeds, replace=False)
        else:
            seeds = farthest_point_sample(sparse, n_seeds, seed_index=0)
        sparse_index = NeighborIndex(sparse.points)
        dense_index = NeighborIndex(dense.points)
        for s in seeds:
            anchor = sparse.points[s]
            sp_idx = sparse_index.knn(anchor, patch_size)
            dn_idx = dense_index.knn(anchor, factor * patch_size)
            raw = sparse.points[sp_idx]
            centroid = raw.mean(axis=0)
            scale = float(np.linalg.norm(raw - centroid, axis=1).max())
            if scale == 0.0:
                scale = 1.0
            examples.append(TrainExample(
                sparse_points=(raw - centroid) / scale,
                sparse_normals=sparse.normals[sp_idx].copy(),
                dense_points=(dense.points[dn_idx] - centroid) / scale,
                dense_normals=dense.normals[dn_idx].copy(),
                centroid=centroid, scale=scale, seed_index=int(s)))
    return examples


def augment_example(example: TrainExample, rng: np.random.Generator,
                    scale_range=(0.8, 1.2), jitter_sigma: float = 0.005) -> TrainExample:
    """Shared rotation+scale on both patches; jitter on the sparse input only."""
    params = AugmentParams.draw(rng, scale_range, jitter_sigma)
    rot = params.rotation.T
    sparse = example.sparse_points @ rot * params.scale
    dense = example.dense_points @ rot * params.scale
    if params.jitter_sigma > 0.0:
        radius = float(np.linalg.norm(sparse, axis=1).max())
        sigma = params.jitter_sigma * radius
        noise = rng.normal(scale=sigma, size=sparse.shape)
        sparse = sparse + np.clip(noise, -3.0 * sigma, 3.0 * sigma)
    return TrainExample(sparse_points=sparse,
                        sparse_normals=example.sparse_normals @ rot,
                        dense_points=dense,
                        dense_normals=example.dense_normals @ rot,
                        centroid=example.centroid, scale=example.scale,
                        seed_index=example.seed_index)


def _example_losses(model: PUGeoNet, example: TrainExample, weights: LossWeights,
                    reduction: str = "sum"):
    out = model.forward(example.sparse_points)
    if not np.isfinite(out.points.data).all():
        raise TrainingDiverged("non-finite model output")
    cd = chamfer_loss(out.points, example.dense_points)
    coarse = coarse_normal_loss_graph(out.coarse_normals, example.sparse_normals,
                                      reduction=reduction)
    refined = refined_normal_loss_graph(out.points, out.normals,
                                        example.dense_points, example.dense_normals,
                                        reduction=reduction)
    # ablations drop the matching supervision terms
    beta = weights.beta if (model.config.coarse_to_fine and model.config.predict_normals) else 0.0
    gamma = weights.gamma if model.config.predict_normals else 0.0
    effective = LossWeights(weights.alpha, beta, gamma)
    return total_loss_graph(cd, coarse, refined, effective), cd, coarse, refined


def train(config: TrainConfig, dataset: list[TrainExample], model: PUGeoNet,
          log_stream=None, checkpoint_dir=None):
    """Run the optimization loop; returns (model, per-epoch history).

    Emits one JSON line per epoch to log_stream with the mean loss
    components.  A non-finite loss aborts with TrainingDiverged carrying
    step/component/gradient diagnostics.  Deterministic given config.seed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    optimizer = ad.Adam(model.parameters(), lr=config.lr)
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        sums = np.zeros(4)
        batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[i] for i in order[start:start + config.batch_size]]
            if config.augment:
                batch = [augment_example(ex, rng) for ex in batch]
            totals = []
            components = np.zeros(3)
            try:
                for example in batch:
                    total, cd, coarse, refined = _example_losses(
                        model, example, config.weights, config.normal_reduction)
                    totals.append(total)
                    components += [cd.item(), coarse.item(), refined.item()]
                batch_loss = totals[0]
                for extra in totals[1:]:
                    batch_loss = ad.add(batch_loss, extra)
                batch_loss = ad.mul(batch_loss, 1.0 / len(batch))
                if not np.isfinite(batch_loss.item()):
                    raise TrainingDiverged("non-finite loss")
            except TrainingDiverged as exc:
                grad_norms = {name: float(np.linalg.norm(t.grad)) if t.grad is not None
                              else 0.0 for name, t in model.named_params()}
                raise TrainingDiverged(
                    f"{exc} at step {step}",
                    {"step": step, "components": (components / max(len(batch), 1)).tolist(),
                     "grad_norms": grad_norms}) from None
            optimizer.zero_grad()
            ad.backward(batch_loss)
            optimizer.step()
            sums += [batch_loss.item(), *(components / len(batch))]
            batches += 1
            step += 1
        record = {"epoch": epoch, "l_total": sums[0] / batches, "l_cd": sums[1] / batches,
                  "l_coarse": sums[2] / batches, "l_refined": sums[3] / batches}
        history.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record, sort_keys=True) + "\n")
            log_stream.flush()
        if checkpoint_dir is not None and (epoch + 1) % config.checkpoint_every == 0:
            save_model(model, f"{checkpoint_dir}/checkpoint_epoch{epoch + 1:04d}.pugeo")
    if checkpoint_dir is not None:
        save_model(model, f"{checkpoint_dir}/checkpoint_final.pugeo")
    return model, history


# ---------------------------------------------------------------------------
# whole-cloud upsampling pipeline and evaluation


def upsample_cloud(cloud: PointCloud, factor: int, method: str = "analytic",
                   model: PUGeoNet | None = None, k: int = 16,
                   pattern: SamplePattern | None = None, patch_size: int = 256,
                   coverage: float = 3.0, seed: int = 0,
                   displacement: bool = True) -> PointCloud:
    """Patch-extract, upsample each patch, denormalize and fuse to R*M points."""
    if method == "model":
        if model is None:
            raise ValueError("method 'model' requires a model")
        patch_size = model.config.patch_size
        factor = model.config.factor
    rng = np.random.default_rng(seed)
    patches = extract_patches(cloud, patch_size, coverage)
    pieces = []
    for patch in patches:
        if method == "analytic":
            result = upsample_analytic(PointCloud(patch.points), factor, k=k,
                                       pattern=pattern, rng=rng,
                                       displacement=displacement)
        elif method == "model":
            result = model.upsample_patch(patch.points)
        else:
            raise ValueError(f"unknown method {method!r}")
        world = result.points * patch.scale + patch.centroid
        pieces.append(PointCloud(world, result.normals))
    return fuse_patches(pieces, factor * len(cloud))


def evaluate(cloud: PointCloud, gt_dense: PointCloud, gt_mesh: TriangleMesh,
             factor: int, method: str = "analytic", model: PUGeoNet | None = None,
             k: int = 16, pattern: SamplePattern | None = None, patch_size: int = 256,
             coverage: float = 3.0, seed: int = 0, inputs: dict | None = None,
             displacement: bool = True) -> MetricReport:
    """Upsample `cloud` and measure it against the dense ground truth and mesh."""
    pred = upsample_cloud(cloud, factor, method=method, model=model, k=k,
                          pattern=pattern, patch_size=patch_size, coverage=coverage,
                          seed=seed, displacement=displacement)
    return report_metrics(pred, gt_dense, gt_mesh, factor=factor, inputs=inputs)
