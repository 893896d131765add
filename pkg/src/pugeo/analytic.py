"""Analytic (learning-free) upsampling through local parameterization.

For each input point: estimate a tangent frame and principal curvatures
from its k nearest neighbors, draw parametric samples in the local disk,
lift them to the tangent plane, then push each lifted point along the
frame normal by the second-order height (k1*u^2 + k2*v^2)/2.  This is the
geometric oracle the learned model is sanity-checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .geometry import AugmentedJacobian, estimate_frame, fit_fundamental_forms
from .io import PointCloud
from .sampling import NeighborIndex

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

PATTERN_KINDS = ("fibonacci_disk", "jittered_grid")


@dataclass
class SamplePattern:
    """How parametric samples are laid out inside the local disk."""

    kind: str = "fibonacci_disk"
    radius_scale: float = 0.7

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.radius_scale < 0.0:
            raise ValueError("radius_scale must be non-negative")


@dataclass
class UpsampleResult:
    """R samples per source point plus per-sample and per-source normals."""

    points: np.ndarray          # (R*N, 3)
    normals: np.ndarray         # (R*N, 3) unit
    coarse_normals: np.ndarray  # (N, 3) unit
    deltas: np.ndarray          # (R*N,)
    parent: np.ndarray          # (R*N,) source index, parent[i*R + r] = i
    metadata: dict = field(default_factory=dict)


def param_samples(factor: int, pattern: SamplePattern, local_radius: float,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """(R, 2) parametric samples inside the disk of radius_scale*local_radius.

    fibonacci_disk places r_j = radius*sqrt((j+0.5)/R) at multiples of the
    golden angle (no RNG).  jittered_grid jitters the first R cells of a
    ceil(sqrt(R))^2 grid spanning the inscribed square of the disk.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if local_radius < 0.0:
        raise ValueError("local_radius must be non-negative")
    radius = pattern.radius_scale * local_radius
    if pattern.kind == "fibonacci_disk":
        j = np.arange(factor, dtype=np.float64)
        r = radius * np.sqrt((j + 0.5) / factor)
        angle = j * GOLDEN_ANGLE
        return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
    if rng is None:
        rng = np.random.default_rng(0)
    m = math.ceil(math.sqrt(factor))
    half = radius / math.sqrt(2.0)  # inscribed square keeps samples in the disk
    cell = 2.0 * half / m
    rows, cols = np.divmod(np.arange(factor), m)
    u = -half + (cols + rng.random(factor)) * cell
    v = -half + (rows + rng.random(factor)) * cell
    return np.stack([u, v], axis=1)


def upsample_analytic(cloud: PointCloud, factor: int, k: int = 16,
                      pattern: SamplePattern | None = None,
                      rng: np.random.Generator | None = None,
                      displacement: bool = True,
                      collect_frames: bool = False) -> UpsampleResult:
    """Upsample a cloud R-fold via frame estimation and quadric displacement.

    Per point: kNN(k) neighborhood -> tangent frame -> curvature fit ->
    samples in the local disk (radius from the median 4-NN spacing) rotated
    into principal coordinates -> tangent lift -> displacement along t3.
    `displacement=False` forces all displacements to zero (first-order
    baseline).  Degenerate neighborhoods fall back to a canonical frame
    with zero displacement and are counted in result metadata.
    """
    if pattern is None:
        pattern = SamplePattern()
    if rng is None:
        rng = np.random.default_rng(0)
    pts = cloud.points
    n = len(pts)
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")

    index = NeighborIndex(pts)
    neighbor_idx = index.knn_batch(pts, k)  # row i starts with i itself

    out_points = np.empty((n * factor, 3))
    out_normals = np.empty((n * factor, 3))
    out_deltas = np.empty(n * factor)
    coarse = np.empty((n, 3))
    parent = np.repeat(np.arange(n, dtype=np.int64), factor)
    degenerate_frames = 0
    degenerate_fits = 0
    frames = [] if collect_frames else None

    for i in range(n):
        neighborhood = pts[neighbor_idx[i]]
        center = pts[i]
        try:
            frame = estimate_frame(neighborhood, center)
            forms = fit_fundamental_forms(neighborhood, frame)
        except GeometryError:
            degenerate_frames += 1
            frame = AugmentedJacobian(origin=center.copy(),
                                      t1=np.array([1.0, 0.0, 0.0]),
                                      t2=np.array([0.0, 1.0, 0.0]),
                                      t3=np.array([0.0, 0.0, 1.0]))
            forms = None
        dists = np.linalg.norm(neighborhood - center, axis=1)
        local_radius = float(np.median(np.sort(dists)[1:5]))
        uv = param_samples(factor, pattern, local_radius, rng)

        if forms is None or forms.degenerate:
            if forms is not None and forms.degenerate:
                degenerate_fits += 1
            p1, p2 = frame.t1, frame.t2
            k1 = k2 = 0.0
        else:
            p1 = forms.dir1[0] * frame.t1 + forms.dir1[1] * frame.t2
            p2 = forms.dir2[0] * frame.t1 + forms.dir2[1] * frame.t2
            k1, k2 = forms.k1, forms.k2

        lifted = center + uv[:, :1] * p1 + uv[:, 1:] * p2
        deltas = 0.5 * (k1 * uv[:, 0] ** 2 + k2 * uv[:, 1] ** 2)
        if local_radius > 0.0:
            deltas = np.clip(deltas, -local_radius, local_radius)
        if not displacement:
            deltas = np.zeros_like(deltas)
        samples = lifted + deltas[:, None] * frame.t3
        normals = -k1 * uv[:, :1] * p1 - k2 * uv[:, 1:] * p2 + frame.t3
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)

        sl = slice(i * factor, (i + 1) * factor)
        out_points[sl] = samples
        out_normals[sl] = normals
        out_deltas[sl] = deltas
        coarse[i] = frame.t3
        if frames is not None:
            frames.append(frame)

    metadata = {"degenerate_frames": degenerate_frames, "degenerate_fits": degenerate_fits}
    if frames is not None:
        metadata["frames"] = frames
    return UpsampleResult(points=out_points, normals=out_normals, coarse_normals=coarse,
                          deltas=out_deltas, parent=parent, metadata=metadata)
