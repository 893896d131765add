"""Exact point-to-triangle distances with a bounding-volume hierarchy.

The per-triangle routine classifies the closest point into the interior /
edge / vertex regions.  The BVH (median split on centroids along the
longest axis, axis-aligned boxes) only prunes subtrees whose box is
strictly farther than the current best, so its result equals a brute-force
scan over all triangles bit for bit.
"""

from __future__ import annotations

import heapq

import numpy as np

from .io import TriangleMesh


def point_to_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                       c: np.ndarray) -> np.ndarray:
    """Distances from point p to each triangle (a[i], b[i], c[i])."""
    p = np.asarray(p, dtype=np.float64).reshape(3)
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(c, dtype=np.float64).reshape(-1, 3)

    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)

    closest = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    # vertex region A
    mask = (d1 <= 0.0) & (d2 <= 0.0)
    closest[mask] = a[mask]
    done |= mask

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)

    mask = ~done & (d3 >= 0.0) & (d4 <= d3)  # vertex region B
    closest[mask] = b[mask]
    done |= mask

    vc = d1 * d4 - d3 * d2
    mask = ~done & (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)  # edge AB
    if np.any(mask):
        t = d1[mask] / (d1[mask] - d3[mask])
        closest[mask] = a[mask] + t[:, None] * ab[mask]
        done |= mask

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    mask = ~done & (d6 >= 0.0) & (d5 <= d6)  # vertex region C
    closest[mask] = c[mask]
    done |= mask

    vb = d5 * d2 - d1 * d6
    mask = ~done & (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)  # edge AC
    if np.any(mask):
        t = d2[mask] / (d2[mask] - d6[mask])
        closest[mask] = a[mask] + t[:, None] * ac[mask]
        done |= mask

    va = d3 * d6 - d5 * d4
    mask = ~done & (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)  # edge BC
    if np.any(mask):
        t = (d4[mask] - d3[mask]) / ((d4[mask] - d3[mask]) + (d5[mask] - d6[mask]))
        closest[mask] = b[mask] + t[:, None] * (c[mask] - b[mask])
        done |= mask

    mask = ~done  # interior
    if np.any(mask):
        denom = va[mask] + vb[mask] + vc[mask]
        v = vb[mask] / denom
        w = vc[mask] / denom
        closest[mask] = a[mask] + v[:, None] * ab[mask] + w[:, None] * ac[mask]

    return np.linalg.norm(closest - p, axis=1)


def brute_force_mesh_distance(p, mesh: TriangleMesh) -> float:
    """Reference: minimum distance over every triangle of the mesh."""
    v, t = mesh.vertices, mesh.triangles
    return float(np.min(point_to_triangles(p, v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])))


class TriangleBVH:
    """Median-split AABB tree over a mesh's triangles."""

    LEAF_SIZE = 8

    def __init__(self, mesh: TriangleMesh):
        if len(mesh.triangles) == 0:
            raise ValueError("mesh has no triangles")
        v, t = mesh.vertices, mesh.triangles
        self.a = v[t[:, 0]]
        self.b = v[t[:, 1]]
        self.c = v[t[:, 2]]
        corners = np.stack([self.a, self.b, self.c], axis=1)  # (m, 3, 3)
        self._tri_lo = corners.min(axis=1)
        self._tri_hi = corners.max(axis=1)
        centroids = corners.mean(axis=1)

        # nodes: (lo, hi, left, right, start, end); leaves have left == -1
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.children: list[tuple[int, int]] = []
        self.ranges: list[tuple[int, int]] = []
        self.order = np.arange(len(t))
        self.root = self._build(0, len(t), centroids)

    def _build(self, start: int, end: int, centroids: np.ndarray) -> int:
        idx = self.order[start:end]
        lo = self._tri_lo[idx].min(axis=0)
        hi = self._tri_hi[idx].max(axis=0)
        node = len(self.lo)
        self.lo.append(lo)
        self.hi.append(hi)
        self.children.append((-1, -1))
        self.ranges.append((start, end))
        if end - start <= self.LEAF_SIZE:
            return node
        axis = int(np.argmax(hi - lo))
        keys = centroids[idx, axis]
        local = np.argsort(keys, kind="stable")
        self.order[start:end] = idx[local]
        mid = start + (end - start) // 2
        left = self._build(start, mid, centroids)
        right = self._build(mid, end, centroids)
        self.children[node] = (left, right)
        return node

    def _box_distance(self, node: int, p: np.ndarray) -> float:
        d = np.maximum(np.maximum(self.lo[node] - p, 0.0), p - self.hi[node])
        return float(np.sqrt(np.sum(d * d)))

    def distance(self, p) -> float:
        """Exact distance from p to the mesh surface."""
        p = np.asarray(p, dtype=np.float64).reshape(3)
        best = np.inf
        heap = [(self._box_distance(self.root, p), self.root)]
        while heap:
            bound, node = heapq.heappop(heap)
            if bound > best:
                continue
            left, right = self.children[node]
            if left < 0:
                start, end = self.ranges[node]
                idx = self.order[start:end]
                d = point_to_triangles(p, self.a[idx], self.b[idx], self.c[idx])
                best = min(best, float(np.min(d)))
            else:
                for child in (left, right):
                    child_bound = self._box_distance(child, p)
                    if child_bound <= best:
                        heapq.heappush(heap, (child_bound, child))
        return best

    def distances(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.array([self.distance(p) for p in points])
