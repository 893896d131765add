"""Training losses: Chamfer distance and unoriented normal losses.

Each loss exists twice: a plain numpy version used for evaluation and as
the oracle in tests, and a graph version built on autodiff tensors for
training.  The nearest-neighbor correspondences inside the graph losses
are computed from current values and treated as constants during the
backward pass (the standard subgradient choice).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .sampling import NeighborIndex

_UNIT_TOL = 1e-5


@dataclass
class LossWeights:
    """Weights of the joint loss: alpha*cd + beta*coarse + gamma*refined."""

    alpha: float = 100.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise ValueError("loss weights must be non-negative")


def nearest_indices(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Index of the nearest target for each query; ties to the lowest index."""
    return NeighborIndex(targets).nearest(queries)


# ---------------------------------------------------------------------------
# numpy versions


def chamfer(x: np.ndarray, y: np.ndarray, normalization: str = "target") -> float:
    """Symmetric sum of nearest-neighbor distances.

    With normalization="target" both directed sums are divided by |Y| (the
    dense-set size); "per_set" divides each directed sum by its own source
    size instead.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 3)
    if len(x) == 0 or len(y) == 0:
        raise ValueError("chamfer requires non-empty point sets")
    phi = nearest_indices(x, y)
    psi = nearest_indices(y, x)
    forward = np.linalg.norm(x - y[phi], axis=1).sum()
    backward_ = np.linalg.norm(y - x[psi], axis=1).sum()
    if normalization == "target":
        return float((forward + backward_) / len(y))
    if normalization == "per_set":
        return float(forward / len(x) + backward_ / len(y))
    raise ValueError(f"unknown normalization {normalization!r}")


def _check_unit(v: np.ndarray, name: str) -> None:
    lengths = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(lengths - 1.0) > _UNIT_TOL):
        worst = float(np.max(np.abs(lengths - 1.0)))
        raise ValueError(f"{name} must be unit vectors (worst deviation {worst:.3g})")


def normal_loss_unoriented(n: np.ndarray, m: np.ndarray) -> float:
    """min(||n - m||^2, ||n + m||^2) for unit vectors n, m."""
    n = np.asarray(n, dtype=np.float64).reshape(3)
    m = np.asarray(m, dtype=np.float64).reshape(3)
    _check_unit(n[None], "n")
    _check_unit(m[None], "m")
    return float(min(np.sum((n - m) ** 2), np.sum((n + m) ** 2)))


def _unoriented_sq(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    minus = np.sum((pred - gt) ** 2, axis=-1)
    plus = np.sum((pred + gt) ** 2, axis=-1)
    return np.minimum(minus, plus)


def coarse_normal_loss(predicted: np.ndarray, target: np.ndarray,
                       reduction: str = "sum") -> float:
    """Index-aligned unoriented normal loss over the sparse points."""
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(predicted) != len(target):
        raise ValueError(f"length mismatch: {len(predicted)} vs {len(target)}")
    _check_unit(predicted, "predicted normals")
    _check_unit(target, "target normals")
    values = _unoriented_sq(predicted, target)
    return float(values.mean() if reduction == "mean" else values.sum())


def refined_normal_loss(pred_points: np.ndarray, pred_normals: np.ndarray,
                        gt_points: np.ndarray, gt_normals: np.ndarray | None,
                        reduction: str = "sum") -> float:
    """Unoriented normal loss against the nearest ground-truth point's normal."""
    if gt_normals is None:
        raise ValueError("ground truth normals are required")
    pred_points = np.asarray(pred_points, dtype=np.float64).reshape(-1, 3)
    pred_normals = np.asarray(pred_normals, dtype=np.float64).reshape(-1, 3)
    gt_points = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
    gt_normals = np.asarray(gt_normals, dtype=np.float64).reshape(-1, 3)
    if len(gt_points) == 0:
        raise ValueError("ground truth is empty")
    _check_unit(pred_normals, "predicted normals")
    _check_unit(gt_normals, "target normals")
    phi = nearest_indices(pred_points, gt_points)
    values = _unoriented_sq(pred_normals, gt_normals[phi])
    return float(values.mean() if reduction == "mean" else values.sum())


def total_loss(cd: float, coarse: float, refined: float,
               weights: LossWeights | None = None) -> float:
    w = weights or LossWeights()
    return w.alpha * cd + w.beta * coarse + w.gamma * refined


# ---------------------------------------------------------------------------
# graph versions (autodiff tensors)


def _row_norms(t: Tensor, eps: float = 1e-12) -> Tensor:
    # the eps keeps sqrt differentiable if a predicted point lands exactly
    # on its target; negligible against any real distance
    return ad.sqrt(ad.add(ad.reduce_sum(ad.square(t), axis=-1), eps))


def chamfer_loss(pred: Tensor, gt: np.ndarray, normalization: str = "target") -> Tensor:
    """Graph Chamfer distance between predicted points and a fixed target set."""
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    pred_values = pred.data.astype(np.float64)
    phi = nearest_indices(pred_values, gt)
    psi = nearest_indices(gt, pred_values)
    gt_c = ad.constant(gt.astype(pred.dtype))
    forward = ad.reduce_sum(_row_norms(ad.sub(pred, ad.gather(gt_c, phi, axis=0))))
    backward_ = ad.reduce_sum(_row_norms(ad.sub(ad.gather(pred, psi, axis=0), gt_c)))
    if normalization == "target":
        return ad.mul(ad.add(forward, backward_), 1.0 / len(gt))
    if normalization == "per_set":
        return ad.add(ad.mul(forward, 1.0 / len(pred_values)),
                      ad.mul(backward_, 1.0 / len(gt)))
    raise ValueError(f"unknown normalization {normalization!r}")


def _unoriented_sq_loss(pred: Tensor, gt_const: Tensor) -> Tensor:
    minus = ad.reduce_sum(ad.square(ad.sub(pred, gt_const)), axis=-1)
    plus = ad.reduce_sum(ad.square(ad.add(pred, gt_const)), axis=-1)
    mask = minus.data <= plus.data  # branch fixed by value; min at ties -> minus
    return ad.select(mask, minus, plus)


def coarse_normal_loss_graph(pred_normals: Tensor, gt_normals: np.ndarray,
                             reduction: str = "sum") -> Tensor:
    gt = ad.constant(np.asarray(gt_normals).astype(pred_normals.dtype))
    values = _unoriented_sq_loss(pred_normals, gt)
    return ad.reduce_mean(values) if reduction == "mean" else ad.reduce_sum(values)


def refined_normal_loss_graph(pred_points: Tensor, pred_normals: Tensor,
                              gt_points: np.ndarray, gt_normals: np.ndarray,
                              reduction: str = "sum") -> Tensor:
    phi = nearest_indices(pred_points.data.astype(np.float64),
                          np.asarray(gt_points, dtype=np.float64))
    matched = ad.constant(np.asarray(gt_normals)[phi].astype(pred_normals.dtype))
    values = _unoriented_sq_loss(pred_normals, matched)
    return ad.reduce_mean(values) if reduction == "mean" else ad.reduce_sum(values)


def total_loss_graph(cd: Tensor, coarse: Tensor, refined: Tensor,
                     weights: LossWeights | None = None) -> Tensor:
    w = weights or LossWeights()
    return ad.add(ad.add(ad.mul(cd, w.alpha), ad.mul(coarse, w.beta)),
                  ad.mul(refined, w.gamma))
