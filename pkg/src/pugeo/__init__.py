"""Geometry-centric point cloud upsampling.

Sparse clouds are densified by learning (or analytically estimating) a
local parameterization per point: a 3x3 linear lift maps 2D parametric
samples onto each tangent plane, and a curvature-driven displacement along
the normal bends them onto the surface.  The package bundles the text IO,
sampling, differential-geometry, autodiff, model, loss/metric and training
machinery for the whole pipeline at desk scale.
"""

from .analytic import SamplePattern, UpsampleResult, param_samples, upsample_analytic
from .geometry import (AugmentedJacobian, FundamentalForms, ParamSample, estimate_frame,
                       fit_fundamental_forms, frame_stats, lift_to_tangent,
                       normal_displacement, normal_from_T, quadric_normal)
from .io import PointCloud, TriangleMesh, read_mesh, read_xyz, write_mesh, write_xyz
from .losses import (LossWeights, chamfer, coarse_normal_loss, normal_loss_unoriented,
                     refined_normal_loss, total_loss)
from .metrics import MetricReport, metric_hd, metric_jsd, metric_p2f, surface_compare
from .model import PUGeoConfig, PUGeoNet, load_model, save_model
from .sampling import (AugmentParams, Patch, augment, denormalize, extract_patches,
                       farthest_point_sample, fuse_patches, knn, poisson_disk_sample)
from .trainer import (TrainConfig, TrainExample, build_dataset, evaluate, train,
                      upsample_cloud)

__version__ = "0.1.0"

__all__ = [
    "AugmentParams", "AugmentedJacobian", "FundamentalForms", "LossWeights",
    "MetricReport", "ParamSample", "Patch", "PointCloud", "PUGeoConfig", "PUGeoNet",
    "SamplePattern", "TrainConfig", "TrainExample", "TriangleMesh", "UpsampleResult",
    "augment", "build_dataset", "chamfer", "coarse_normal_loss", "denormalize",
    "estimate_frame", "evaluate", "extract_patches", "farthest_point_sample",
    "fit_fundamental_forms", "frame_stats", "fuse_patches", "knn", "lift_to_tangent",
    "load_model", "metric_hd", "metric_jsd", "metric_p2f", "normal_displacement",
    "normal_from_T", "normal_loss_unoriented", "param_samples", "poisson_disk_sample",
    "quadric_normal", "read_mesh", "read_xyz", "refined_normal_loss", "save_model",
    "surface_compare", "total_loss", "train", "upsample_analytic", "upsample_cloud",
    "write_mesh", "write_xyz",
]
