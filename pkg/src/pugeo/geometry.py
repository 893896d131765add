"""Per-point differential geometry from neighborhoods.

A tangent frame is estimated by PCA of the neighborhood covariance and
packed as the 3x3 matrix [t1 t2 t3] whose first two columns span the
tangent plane and whose third column is their cross product.  A quadric
height fit over that frame yields the principal curvatures, which drive
the normal displacement that bends tangent-plane samples onto the surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

#: relative eigenvalue floor below which a covariance is considered collinear
_COLLINEAR_RTOL = 1e-10
#: normal-equation condition number above which a quadric fit is degenerate
_FIT_CONDITION_LIMIT = 1e8


@dataclass
class AugmentedJacobian:
    """Orthonormal tangent frame at `origin`: columns t1, t2, t3 = t1 x t2."""

    origin: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray

    def matrix(self) -> np.ndarray:
        """The 3x3 matrix with columns (t1, t2, t3)."""
        return np.stack([self.t1, self.t2, self.t3], axis=1)


@dataclass
class FundamentalForms:
    """Principal curvatures (k1 >= k2) and unit 2D principal directions."""

    k1: float
    k2: float
    dir1: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    dir2: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    degenerate: bool = False


@dataclass
class ParamSample:
    """A 2D parametric coordinate (u, v) in local frame length units."""

    u: float
    v: float


def estimate_frame(neighborhood, center) -> AugmentedJacobian:
    """PCA tangent frame of a neighborhood around `center`, jet-refined.

    t3 starts as the smallest-eigenvalue direction of the neighborhood
    covariance; one least-squares jet step (height fit with linear terms)
    then cancels the residual tilt of the PCA plane, which would otherwise
    leak first-order error into the curvature fit.  t3 is oriented toward
    the neighborhood centroid (the concave side), or +z when the centroid
    coincides with the center.  t1 is the dominant covariance direction
    projected into the tangent plane, t2 = t3 x t1.
    """
    pts = np.asarray(neighborhood, dtype=np.float64).reshape(-1, 3)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    if len(pts) < 6:
        raise ValueError(f"need at least 6 neighbors, got {len(pts)}")
    centroid = pts.mean(axis=0)
    deltas = pts - centroid
    cov = deltas.T @ deltas / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    if eigvals[1] <= _COLLINEAR_RTOL * max(eigvals[2], 1e-300):
        raise GeometryError("neighborhood is collinear or degenerate")

    t3 = eigvecs[:, 0]
    major = eigvecs[:, 2]
    t1 = major - (major @ t3) * t3
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(t3, t1)
    t1, t2, t3 = _jet_refine(pts, center, t1, t2, t3)

    reference = centroid - center
    if np.linalg.norm(reference) <= 1e-12 * math.sqrt(max(eigvals[2], 1e-300)):
        reference = np.array([0.0, 0.0, 1.0])
    if float(t3 @ reference) < 0.0:
        t3 = -t3
        t2 = -t2  # keep the handedness t3 = t1 x t2
    return AugmentedJacobian(origin=center.copy(), t1=t1, t2=t2, t3=t3)


def _jet_refine(pts, center, t1, t2, t3):
    """One height-fit-with-linear-terms step aligning t3 with the surface."""
    d = pts - center
    u = d @ t1
    v = d @ t2
    w = d @ t3
    design = np.column_stack([u, v, 0.5 * u * u, u * v, 0.5 * v * v])
    solution, _, rank, _ = np.linalg.lstsq(design, w, rcond=None)
    if rank < 5:
        return t1, t2, t3
    a, b = solution[0], solution[1]
    refined = -a * t1 - b * t2 + t3
    refined /= np.linalg.norm(refined)
    t1 = t1 - (t1 @ refined) * refined
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(refined, t1), refined


def fit_fundamental_forms(neighborhood, frame: AugmentedJacobian) -> FundamentalForms:
    """Least-squares quadric height fit in the frame; principal curvatures.

    Neighbors are expressed as (u, v, w) in the frame and w is fitted
    against (u^2/2, u*v, v^2/2) through the origin.  The symmetric
    coefficient matrix [[e, f], [f, g]] is eigen-decomposed into
    curvatures and directions.  Ill-conditioned fits return zero curvature
    flagged degenerate rather than failing.
    """
    pts = np.asarray(neighborhood, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 6:
        raise ValueError(f"need at least 6 neighbors, got {len(pts)}")
    d = pts - frame.origin
    u = d @ frame.t1
    v = d @ frame.t2
    w = d @ frame.t3
    design = np.column_stack([0.5 * u * u, u * v, 0.5 * v * v])
    solution, _, rank, singular = np.linalg.lstsq(design, w, rcond=None)
    smallest = singular[-1] if len(singular) == 3 else 0.0
    if rank < 3 or smallest <= 0.0 or singular[0] / smallest > _FIT_CONDITION_LIMIT:
        return FundamentalForms(0.0, 0.0, degenerate=True)
    e, f, g = solution
    eigvals, eigvecs = np.linalg.eigh(np.array([[e, f], [f, g]]))
    return FundamentalForms(k1=float(eigvals[1]), k2=float(eigvals[0]),
                            dir1=eigvecs[:, 1].copy(), dir2=eigvecs[:, 0].copy())


def normal_from_T(frame: AugmentedJacobian) -> np.ndarray:
    """The frame's normal, i.e. the third column t3."""
    return frame.t3.copy()


def lift_to_tangent(frame: AugmentedJacobian, sample: ParamSample) -> np.ndarray:
    """Map a parametric sample onto the tangent plane: origin + u*t1 + v*t2."""
    return frame.origin + sample.u * frame.t1 + sample.v * frame.t2


def normal_displacement(forms: FundamentalForms, sample: ParamSample) -> float:
    """Second-order height (k1*u^2 + k2*v^2) / 2.

    The sample must already be expressed in principal-direction
    coordinates.
    """
    return 0.5 * (forms.k1 * sample.u ** 2 + forms.k2 * sample.v ** 2)


def quadric_normal(forms: FundamentalForms, sample: ParamSample,
                   frame: AugmentedJacobian) -> np.ndarray:
    """Unit normal of the fitted quadric at a principal-coordinate sample.

    In principal coordinates the quadric is w = (k1*u^2 + k2*v^2)/2, whose
    normal is proportional to (-k1*u, -k2*v, 1); that vector is mapped to
    world space through the principal axes and t3.
    """
    p1 = forms.dir1[0] * frame.t1 + forms.dir1[1] * frame.t2
    p2 = forms.dir2[0] * frame.t1 + forms.dir2[1] * frame.t2
    n = -forms.k1 * sample.u * p1 - forms.k2 * sample.v * p2 + frame.t3
    return n / np.linalg.norm(n)


# ---------------------------------------------------------------------------
# frame statistics


@dataclass
class FrameStats:
    """Histogram report over frame consistency angles and displacements."""

    theta_deg: np.ndarray
    theta_counts: np.ndarray
    theta_edges: np.ndarray
    delta_counts: np.ndarray
    delta_edges: np.ndarray
    degenerate: int

    def to_tsv(self) -> str:
        lines = [f"# theta_deg\tbins={len(self.theta_counts)}\t"
                 f"range=[0,90]\tdegenerate={self.degenerate}",
                 "lo\thi\tcount"]
        for i, count in enumerate(self.theta_counts):
            lines.append(f"{self.theta_edges[i]:.6g}\t{self.theta_edges[i + 1]:.6g}\t{count}")
        lines.append("")
        lines.append(f"# delta\tbins={len(self.delta_counts)}\t"
                     f"range=[{self.delta_edges[0]:.6g},{self.delta_edges[-1]:.6g}]")
        lines.append("lo\thi\tcount")
        for i, count in enumerate(self.delta_counts):
            lines.append(f"{self.delta_edges[i]:.6g}\t{self.delta_edges[i + 1]:.6g}\t{count}")
        return "\n".join(lines) + "\n"


def frame_stats(frames: list[AugmentedJacobian], deltas) -> FrameStats:
    """Angle-vs-cross-product and displacement histograms.

    theta is the unoriented angle between t3 and t1 x t2 in degrees (folded
    into [0, 90]); frames with zero-length t3 land in a degenerate bucket.
    The delta histogram uses 50 bins over the data range.
    """
    thetas = []
    degenerate = 0
    for frame in frames:
        cross = np.cross(frame.t1, frame.t2)
        n3 = np.linalg.norm(frame.t3)
        nc = np.linalg.norm(cross)
        if n3 <= 0.0 or nc <= 0.0:
            degenerate += 1
            continue
        cos = float(np.clip(frame.t3 @ cross / (n3 * nc), -1.0, 1.0))
        angle = math.degrees(math.acos(cos))
        thetas.append(min(angle, 180.0 - angle))
    theta_deg = np.asarray(thetas, dtype=np.float64)
    theta_counts, theta_edges = np.histogram(theta_deg, bins=30, range=(0.0, 90.0))

    deltas = np.asarray(deltas, dtype=np.float64).ravel()
    if deltas.size == 0:
        delta_counts, delta_edges = np.histogram(deltas, bins=50, range=(0.0, 1.0))
    else:
        lo, hi = float(deltas.min()), float(deltas.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        delta_counts, delta_edges = np.histogram(deltas, bins=50, range=(lo, hi))
    return FrameStats(theta_deg=theta_deg, theta_counts=theta_counts,
                      theta_edges=theta_edges, delta_counts=delta_counts,
                      delta_edges=delta_edges, degenerate=degenerate)
