"""Shared test utilities: synthetic geometry and independent oracles."""

import numpy as np

from pugeo import PointCloud, TriangleMesh, poisson_disk_sample

ICO_FACES = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]


def icosphere(subdiv: int, radius: float = 1.0) -> TriangleMesh:
    phi = (1 + 5 ** 0.5) / 2
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.asarray(v, float) / np.linalg.norm(v) for v in verts]
    faces = list(ICO_FACES)
    for _ in range(subdiv):
        cache = {}
        out = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = out
    v = np.asarray(verts) * radius
    return TriangleMesh(v, np.asarray(faces), v / np.linalg.norm(v, axis=1, keepdims=True))


def cube_mesh(side: float = 1.0) -> TriangleMesh:
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float) * side
    f = np.array([[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
                  [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]])
    return TriangleMesh(v, f)


def unit_square_mesh() -> TriangleMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def sphere_cloud(n: int, radius: float, seed: int) -> PointCloud:
    """Blue-noise points exactly on a sphere: mesh Poisson samples projected."""
    raw = poisson_disk_sample(icosphere(4), n, seed).points
    directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return PointCloud(directions * radius, directions)


def unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# independent oracles


def brute_force_knn(points: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """Full scan sorted by (distance, index)."""
    dists = np.linalg.norm(points - query, axis=1)
    order = np.lexsort((np.arange(len(points)), dists))
    return order[:k]


def brute_force_nearest(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    out = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        d = np.linalg.norm(targets - q, axis=1)
        out[i] = int(np.argmin(d))  # first minimum = lowest index
    return out


def numeric_gradient(fn, tensor, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar fn() w.r.t. tensor.data."""
    flat = tensor.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(tensor.data.shape)


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Relative error with an absolute floor so near-zero entries compare sanely."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
