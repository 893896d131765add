"""The learned upsampler.

A patch of N points is aligned by a small STN, encoded by hierarchical
edge-convolution features with softmax recalibration, expanded R-fold by
predicting per-point parametric samples and a 3x3 linear lift, then
refined by a scalar displacement along the predicted normal direction and
a residual normal update.  Every stage has an ablation switch recorded in
the config.  The alignment is inverted on the way out, so outputs live in
the input's coordinates.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .analytic import SamplePattern, UpsampleResult, param_samples
from .autodiff import Mlp, Tensor
from .errors import CheckpointError

CHECKPOINT_MAGIC = b"PUGEO1"


@dataclass
class PUGeoConfig:
    """Architecture, upsampling factor and ablation switches."""

    factor: int = 4
    patch_size: int = 256
    k: int = 8
    feature_widths: tuple = (32, 64, 128)
    hr_hidden: int = 64
    f1_hidden: int = 128
    f2_hidden: int = 128
    f3_hidden: int = 64
    f4_hidden: int = 64
    recalibration: bool = True
    learned_sampling: bool = True
    linear_transform: bool = True
    coarse_to_fine: bool = True
    predict_normals: bool = True
    dynamic_graph: bool = True
    grid_radius: float = 0.25

    def __post_init__(self):
        self.feature_widths = tuple(int(w) for w in self.feature_widths)
        if self.factor < 1 or self.patch_size < 1 or self.k < 1:
            raise ValueError("factor, patch_size and k must be positive")
        if not self.feature_widths or any(w < 1 for w in self.feature_widths):
            raise ValueError("feature widths must be positive")
        if min(self.hr_hidden, self.f1_hidden, self.f2_hidden,
               self.f3_hidden, self.f4_hidden) < 1:
            raise ValueError("MLP widths must be positive")

    @property
    def levels(self) -> int:
        return len(self.feature_widths)

    @property
    def total_width(self) -> int:
        return sum(self.feature_widths)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feature_widths"] = list(self.feature_widths)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PUGeoConfig":
        data = dict(data)
        data["feature_widths"] = tuple(data["feature_widths"])
        return cls(**data)


@dataclass
class ModelOutput:
    """Graph-connected forward results, in the input patch's coordinates."""

    points: Tensor          # (N*R, 3)
    normals: Tensor         # (N*R, 3) unit
    coarse_normals: Tensor  # (N, 3) unit
    deltas: np.ndarray      # (N, R)
    det_t: np.ndarray       # (N,) determinant of each linear lift
    parent: np.ndarray      # (N*R,)
    t_matrices: np.ndarray = None  # (N, 3, 3) linear lift values, aligned space

    def to_result(self) -> UpsampleResult:
        return UpsampleResult(
            points=self.points.data.astype(np.float64),
            normals=self.normals.data.astype(np.float64),
            coarse_normals=self.coarse_normals.data.astype(np.float64),
            deltas=self.deltas.astype(np.float64).reshape(-1),
            parent=self.parent,
            metadata={"det_T": self.det_t.astype(np.float64)},
        )


def _pairwise_sq_dists(values: np.ndarray) -> np.ndarray:
    # explicit broadcast keeps each pair's arithmetic independent of row
    # order, which the permutation-equivariance contract relies on
    diff = values[:, None, :] - values[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _knn_indices(values: np.ndarray, k: int) -> np.ndarray:
    """k nearest rows for each row, self excluded, ties by ascending index."""
    n = len(values)
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the point count {n}")
    d2 = _pairwise_sq_dists(values)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


class PUGeoNet:
    """Patch upsampler; weights initialize deterministically from `seed`."""

    def __init__(self, config: PUGeoConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = config
        width = c.total_width

        self.stn_point = Mlp(rng, (3, 16, 32), "stn.point", dtype=dtype)
        self.stn_reg = Mlp(rng, (32, 16, 9), "stn.reg", zero_init_last=True, dtype=dtype)
        self.edge_mlps = []
        fan_in = 3
        for level, f_l in enumerate(c.feature_widths):
            self.edge_mlps.append(Mlp(rng, (2 * fan_in, f_l, f_l), f"edge{level}", dtype=dtype))
            fan_in = f_l
        self._modules = [self.stn_point, self.stn_reg, *self.edge_mlps]

        if c.recalibration:
            self.h_r = Mlp(rng, (width, c.hr_hidden, c.levels), "h_r", dtype=dtype)
            self._modules.append(self.h_r)
        if c.learned_sampling:
            self.f1 = Mlp(rng, (width, c.f1_hidden, 2 * c.factor), "f1", dtype=dtype)
            self._modules.append(self.f1)
        if c.linear_transform:
            self.f2 = Mlp(rng, (width, c.f2_hidden, 9), "f2", zero_init_last=True, dtype=dtype)
            self._modules.append(self.f2)
        else:
            self.f2x = Mlp(rng, (width, c.f2_hidden, 3 * c.factor), "f2x",
                           zero_init_last=True, dtype=dtype)
            self._modules.append(self.f2x)
            if c.predict_normals or c.coarse_to_fine:
                self.f2n = Mlp(rng, (width, c.f2_hidden, 3), "f2n", dtype=dtype)
                self._modules.append(self.f2n)
        if c.coarse_to_fine:
            self.f3 = Mlp(rng, (width + 3, c.f3_hidden, 1), "f3", zero_init_last=True,
                          dtype=dtype)
            self._modules.append(self.f3)
            if c.predict_normals:
                self.f4 = Mlp(rng, (width + 3, c.f4_hidden, 3), "f4", zero_init_last=True,
                              dtype=dtype)
                self._modules.append(self.f4)
        else:
            out_width = 6 if c.predict_normals else 3
            self.f_one = Mlp(rng, (width + 2, c.f3_hidden, out_width), "one_shot",
                             zero_init_last=True, dtype=dtype)
            self._modules.append(self.f_one)

        if not c.learned_sampling:
            grid = param_samples(c.factor, SamplePattern("jittered_grid", radius_scale=1.0),
                                 c.grid_radius, np.random.default_rng(0))
            self._fixed_grid = grid.astype(dtype)

    # -- parameters ---------------------------------------------------------

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for module in self._modules:
            out.extend(module.named_params())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def astype(self, dtype) -> "PUGeoNet":
        """A copy of this model with weights cast to `dtype` (for checks)."""
        clone = PUGeoNet(self.config, seed=0, dtype=dtype)
        for (_, src), (_, dst) in zip(self.named_params(), clone.named_params()):
            dst.data = src.data.astype(dtype)
        return clone

    # -- stages -------------------------------------------------------------

    def stn_forward(self, points: Tensor):
        """Global alignment A = I + residual; returns (aligned points, A)."""
        per_point = self.stn_point(points)
        pooled = ad.reduce_max(per_point, axis=0, keepdims=True)
        residual = ad.reshape(self.stn_reg(pooled), (3, 3))
        a = ad.add(residual, ad.constant(np.eye(3, dtype=self.dtype)))
        return ad.matmul(points, ad.transpose(a)), a

    def extract_features(self, aligned: Tensor) -> list[Tensor]:
        """Hierarchical edge features, max-pooled over k neighbors per level."""
        n = aligned.shape[0]
        k = self.config.k
        if k >= n:
            raise ValueError(f"k={k} must be smaller than patch size {n}")
        repeat_idx = np.repeat(np.arange(n), k)
        levels = []
        current = aligned
        for level, mlp in enumerate(self.edge_mlps):
            if level == 0 or not self.config.dynamic_graph:
                graph_values = aligned.data
            else:
                graph_values = current.data
            neighbor_idx = _knn_indices(graph_values, k)
            f_i = ad.gather(current, repeat_idx, axis=0)
            f_j = ad.gather(current, neighbor_idx.reshape(-1), axis=0)
            edge = ad.concat([f_i, ad.sub(f_j, f_i)], axis=-1)
            width = self.config.feature_widths[level]
            pooled = ad.reduce_max(ad.reshape(mlp(edge), (n, k, width)), axis=1)
            levels.append(pooled)
            current = pooled
        return levels

    def recalibrate(self, levels: list[Tensor]) -> Tensor:
        """Softmax-gated weighted concatenation of the per-level features."""
        stacked = ad.concat(levels, axis=-1)
        if not self.config.recalibration:
            return stacked
        weights = ad.softmax(self.h_r(stacked), axis=-1)
        blocks = [ad.mul(feat, ad.gather(weights, np.array([l]), axis=1))
                  for l, feat in enumerate(levels)]
        return ad.concat(blocks, axis=-1)

    def expand(self, c: Tensor, aligned: Tensor):
        """Parametric samples, linear lift T, tangent points and coarse normals."""
        cfg = self.config
        n, r = cfg.patch_size, cfg.factor
        if cfg.learned_sampling:
            uv = ad.reshape(self.f1(c), (n, r, 2))
        else:
            uv = ad.constant(np.broadcast_to(self._fixed_grid, (n, r, 2)).copy())
        source = ad.reshape(aligned, (n, 1, 3))
        if cfg.linear_transform:
            residual = ad.reshape(self.f2(c), (n, 3, 3))
            t = ad.add(residual, ad.constant(np.eye(3, dtype=self.dtype)))
            uv0 = ad.concat([uv, ad.constant(np.zeros((n, r, 1), dtype=self.dtype))], axis=-1)
            xhat = ad.add(ad.apply_linear_maps(t, uv0), source)
            e3 = ad.constant(np.broadcast_to(
                np.array([0.0, 0.0, 1.0], dtype=self.dtype), (n, 1, 3)).copy())
            coarse = ad.unit_rows(ad.reshape(ad.apply_linear_maps(t, e3), (n, 3)))
        else:
            offsets = ad.reshape(self.f2x(c), (n, r, 3))
            xhat = ad.add(offsets, source)
            t = ad.constant(np.broadcast_to(np.eye(3, dtype=self.dtype), (n, 3, 3)).copy())
            if hasattr(self, "f2n"):
                coarse = ad.unit_rows(self.f2n(c))
            else:
                coarse = ad.constant(np.broadcast_to(
                    np.array([0.0, 0.0, 1.0], dtype=self.dtype), (n, 3)).copy())
        return uv, t, xhat, coarse

    def refine(self, xhat: Tensor, c: Tensor, t: Tensor, coarse: Tensor,
               uv: Tensor, aligned: Tensor):
        """Displace tangent samples and update normals; returns (x, n, deltas)."""
        cfg = self.config
        n, r = cfg.patch_size, cfg.factor
        repeat_idx = np.repeat(np.arange(n), r)
        if cfg.coarse_to_fine:
            flat_xhat = ad.reshape(xhat, (n * r, 3))
            c_rep = ad.gather(c, repeat_idx, axis=0)
            inp = ad.concat([flat_xhat, c_rep], axis=-1)
            delta = self.f3(inp)  # (N*R, 1)
            if cfg.linear_transform:
                disp = ad.concat([ad.constant(np.zeros((n * r, 2), dtype=self.dtype)), delta],
                                 axis=-1)
                step = ad.apply_linear_maps(t, ad.reshape(disp, (n, r, 3)))
            else:
                n_rep = ad.gather(coarse, repeat_idx, axis=0)
                step = ad.reshape(ad.mul(delta, n_rep), (n, r, 3))
            points = ad.add(xhat, step)
            if cfg.predict_normals:
                update = ad.add(self.f4(inp), ad.gather(coarse, repeat_idx, axis=0))
                normals = ad.reshape(ad.unit_rows(update), (n, r, 3))
            else:
                normals = ad.reshape(ad.gather(coarse, repeat_idx, axis=0), (n, r, 3))
            deltas = delta.data.reshape(n, r).copy()
        else:
            uv_flat = ad.reshape(uv, (n * r, 2))
            c_rep = ad.gather(c, repeat_idx, axis=0)
            raw = self.f_one(ad.concat([c_rep, uv_flat], axis=-1))
            offsets = ad.gather(raw, np.array([0, 1, 2]), axis=1)
            points = ad.add(ad.reshape(offsets, (n, r, 3)), ad.reshape(aligned, (n, 1, 3)))
            if cfg.predict_normals:
                n_raw = ad.gather(raw, np.array([3, 4, 5]), axis=1)
                up = ad.constant(np.array([0.0, 0.0, 1.0], dtype=self.dtype))
                normals = ad.reshape(ad.unit_rows(ad.add(n_raw, up)), (n, r, 3))
            else:
                normals = ad.constant(np.broadcast_to(
                    np.array([0.0, 0.0, 1.0], dtype=self.dtype), (n, r, 3)).copy())
            deltas = np.zeros((n, r), dtype=self.dtype)
        return points, normals, deltas

    # -- full forward ---------------------------------------------------------

    def forward(self, points) -> ModelOutput:
        """Run the full pipeline on an (N, 3) patch."""
        cfg = self.config
        pts = np.asarray(points, dtype=self.dtype).reshape(-1, 3)
        if len(pts) != cfg.patch_size:
            raise ValueError(f"patch has {len(pts)} points, model expects {cfg.patch_size}")
        n, r = cfg.patch_size, cfg.factor

        x = ad.constant(pts)
        aligned, a = self.stn_forward(x)
        levels = self.extract_features(aligned)
        c = self.recalibrate(levels)
        uv, t, xhat, coarse = self.expand(c, aligned)
        refined, normals, deltas = self.refine(xhat, c, t, coarse, uv, aligned)

        a_inv = ad.inverse(a)
        points_out = ad.matmul(ad.reshape(refined, (n * r, 3)), ad.transpose(a_inv))
        normals_out = ad.unit_rows(ad.matmul(ad.reshape(normals, (n * r, 3)), a))
        coarse_out = ad.unit_rows(ad.matmul(coarse, a))
        return ModelOutput(points=points_out, normals=normals_out, coarse_normals=coarse_out,
                           deltas=deltas, det_t=np.linalg.det(t.data.astype(np.float64)),
                           parent=np.repeat(np.arange(n, dtype=np.int64), r),
                           t_matrices=t.data.astype(np.float64))

    def upsample_patch(self, points) -> UpsampleResult:
        return self.forward(points).to_result()


# ---------------------------------------------------------------------------
# checkpoint serialization: magic, length-prefixed JSON header, raw <f4 data


def save_model(model: PUGeoNet, path) -> None:
    named = model.named_params()
    header = {
        "config": model.config.to_dict(),
        "weights": [{"name": name, "shape": list(t.shape)} for name, t in named],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", len(blob)))
        handle.write(blob)
        for _, tensor in named:
            handle.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_model(path) -> PUGeoNet:
    with open(path, "rb") as handle:
        payload = handle.read()
    if not payload.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("bad magic: not a model checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    if len(payload) < offset + 4:
        raise CheckpointError("truncated header length")
    (header_len,) = struct.unpack_from("<I", payload, offset)
    offset += 4
    if len(payload) < offset + header_len:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(payload[offset:offset + header_len].decode("utf-8"))
        config = PUGeoConfig.from_dict(header["config"])
        declared = [(w["name"], tuple(w["shape"])) for w in header["weights"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed header: {exc}") from None
    offset += header_len

    model = PUGeoNet(config, seed=0)
    named = model.named_params()
    expected = [(name, tuple(t.shape)) for name, t in named]
    if declared != expected:
        raise CheckpointError("header weight list does not match the declared config")
    for (name, shape), (_, tensor) in zip(declared, named):
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise CheckpointError(f"truncated weight data at {name!r}")
        tensor.data = np.frombuffer(payload, dtype="<f4", count=count,
                                    offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError("trailing bytes after weight data")
    return model
