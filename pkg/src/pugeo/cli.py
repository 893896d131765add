"""Command-line interface tying the pipeline together.

Subcommands: ``dataset build``, ``train``, ``upsample``, ``eval`` and
``inspect frames``.  Machine-readable output (JSON, TSV) goes to stdout,
diagnostics to stderr.  Exit codes: 0 success, 2 usage or input error,
3 numerical failure.  Every subcommand is deterministic given --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analytic import SamplePattern, upsample_analytic
from .errors import FormatError, TrainingDiverged
from .geometry import AugmentedJacobian, frame_stats
from .io import PointCloud, read_mesh, read_xyz, write_xyz
from .losses import LossWeights
from .metrics import report_metrics, surface_compare
from .model import PUGeoConfig, PUGeoNet, load_model, save_model
from .sampling import extract_patches
from .trainer import TrainConfig, TrainExample, build_dataset, train, upsample_cloud

MESH_EXTENSIONS = (".obj", ".ply")
PATTERNS = {"fibonacci": "fibonacci_disk", "grid": "jittered_grid"}


def _pattern(name: str) -> SamplePattern:
    return SamplePattern(PATTERNS[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pugeo",
                                     description="Point cloud upsampling pipeline")
    parser.add_argument("--seed", type=int, default=42, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=0,
                        help="parallelism cap; stages run sequentially, so results "
                             "never depend on it")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="dataset construction")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_build = dataset_sub.add_parser("build", help="sample meshes into training patches")
    p_build.add_argument("--mesh-dir", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--points", type=int, default=5000, help="sparse points per mesh")
    p_build.add_argument("--factor", type=int, default=4)
    p_build.add_argument("--patch-size", type=int, default=256)
    p_build.add_argument("--coverage", type=float, default=3.0)
    p_build.add_argument("--noise-sigma", type=float, default=0.0,
                         help="Gaussian noise on sparse inputs, unit-cube units")
    p_build.add_argument("--random-patches", action="store_true",
                         help="random patch seeds instead of farthest point sampling")

    p_train = sub.add_parser("train", help="train the upsampling model")
    p_train.add_argument("--data", required=True, help="manifest path or dataset dir")
    p_train.add_argument("--out", required=True, help="final checkpoint path")
    p_train.add_argument("--factor", type=int, default=None,
                         help="must match the dataset manifest when given")
    p_train.add_argument("--epochs", type=int, default=800)
    p_train.add_argument("--batch", type=int, default=8)
    p_train.add_argument("--lr", type=float, default=0.001)
    p_train.add_argument("--checkpoint-every", type=int, default=50)
    p_train.add_argument("--checkpoint-dir", default=None)
    p_train.add_argument("--k-feature", type=int, default=8,
                         help="neighbors for edge features")
    p_train.add_argument("--no-augment", action="store_true")
    p_train.add_argument("--no-recalibration", action="store_true")
    p_train.add_argument("--no-learned-sampling", action="store_true")
    p_train.add_argument("--no-linear-transform", action="store_true")
    p_train.add_argument("--no-coarse-to-fine", action="store_true")
    p_train.add_argument("--no-normal-prediction", action="store_true")
    p_train.add_argument("--mean-normal-loss", action="store_true",
                         help="mean instead of summed normal losses")
    p_train.add_argument("--alpha", type=float, default=100.0)
    p_train.add_argument("--beta", type=float, default=1.0)
    p_train.add_argument("--gamma", type=float, default=1.0)

    p_up = sub.add_parser("upsample", help="upsample a point cloud")
    p_up.add_argument("--input", required=True)
    p_up.add_argument("--output", required=True)
    p_up.add_argument("--factor", type=int, default=4)
    p_up.add_argument("--method", choices=("analytic", "model"), default="analytic")
    p_up.add_argument("--model", default=None)
    p_up.add_argument("--k", type=int, default=16)
    p_up.add_argument("--pattern", choices=tuple(PATTERNS), default="fibonacci")
    p_up.add_argument("--patch-size", type=int, default=256)
    p_up.add_argument("--coverage", type=float, default=3.0)

    p_eval = sub.add_parser("eval", help="evaluate an upsampled cloud")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt-dense", required=True)
    p_eval.add_argument("--gt-mesh", required=True)
    p_eval.add_argument("--recon-mesh", default=None)
    p_eval.add_argument("--recon-samples", type=int, default=200_000)
    p_eval.add_argument("--factor", type=int, default=None)

    p_inspect = sub.add_parser("inspect", help="diagnostics")
    inspect_sub = p_inspect.add_subparsers(dest="inspect_command", required=True)
    p_frames = inspect_sub.add_parser("frames", help="tangent frame and displacement stats")
    p_frames.add_argument("--input", required=True)
    p_frames.add_argument("--method", choices=("analytic", "model"), default="analytic")
    p_frames.add_argument("--model", default=None)
    p_frames.add_argument("--k", type=int, default=16)
    p_frames.add_argument("--factor", type=int, default=4)
    p_frames.add_argument("--pattern", choices=tuple(PATTERNS), default="fibonacci")
    p_frames.add_argument("--patch-size", type=int, default=256)
    p_frames.add_argument("--coverage", type=float, default=3.0)

    return parser


def _fail(message: str, code: int = 2) -> int:
    print(message, file=sys.stderr)
    return code


def cmd_dataset_build(args) -> int:
    mesh_paths = sorted(p for p in os.listdir(args.mesh_dir)
                        if p.lower().endswith(MESH_EXTENSIONS))
    if not mesh_paths:
        return _fail(f"no meshes found in {args.mesh_dir}")
    meshes = [read_mesh(os.path.join(args.mesh_dir, p)) for p in mesh_paths]
    examples = build_dataset(meshes, args.points, args.factor, args.patch_size,
                             seed=args.seed, coverage=args.coverage,
                             noise_sigma=args.noise_sigma,
                             random_patches=args.random_patches)
    os.makedirs(args.out, exist_ok=True)
    patches = []
    for i, example in enumerate(examples):
        sparse_name = f"patch_{i:04d}_sparse.xyz"
        dense_name = f"patch_{i:04d}_dense.xyz"
        write_xyz(PointCloud(example.sparse_points, example.sparse_normals),
                  os.path.join(args.out, sparse_name))
        write_xyz(PointCloud(example.dense_points, example.dense_normals),
                  os.path.join(args.out, dense_name))
        patches.append({"sparse": sparse_name, "dense": dense_name,
                        "seed_index": example.seed_index})
    manifest = {
        "meshes": mesh_paths,
        "patches": patches,
        "config": {"points": args.points, "factor": args.factor,
                   "patch_size": args.patch_size, "coverage": args.coverage,
                   "noise_sigma": args.noise_sigma, "seed": args.seed,
                   "random_patches": bool(args.random_patches)},
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=2)
        handle.write("\n")
    print(json.dumps({"patches": len(patches), "out": args.out}, sort_keys=True))
    return 0


def _load_manifest_dataset(data_path):
    manifest_path = data_path
    if os.path.isdir(data_path):
        manifest_path = os.path.join(data_path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    base = os.path.dirname(manifest_path)
    examples = []
    for entry in manifest["patches"]:
        sparse = read_xyz(os.path.join(base, entry["sparse"]))
        dense = read_xyz(os.path.join(base, entry["dense"]))
        if sparse.normals is None or dense.normals is None:
            raise FormatError("training patches must carry normals (6 columns)")
        examples.append(TrainExample(sparse_points=sparse.points,
                                     sparse_normals=sparse.normals,
                                     dense_points=dense.points,
                                     dense_normals=dense.normals,
                                     seed_index=int(entry["seed_index"])))
    return manifest, examples


def cmd_train(args) -> int:
    try:
        manifest, dataset = _load_manifest_dataset(args.data)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    factor = manifest["config"]["factor"]
    patch_size = manifest["config"]["patch_size"]
    if args.factor is not None and args.factor != factor:
        return _fail(f"--factor {args.factor} does not match dataset factor {factor}")
    config = PUGeoConfig(factor=factor, patch_size=patch_size, k=args.k_feature,
                         recalibration=not args.no_recalibration,
                         learned_sampling=not args.no_learned_sampling,
                         linear_transform=not args.no_linear_transform,
                         coarse_to_fine=not args.no_coarse_to_fine,
                         predict_normals=not args.no_normal_prediction)
    model = PUGeoNet(config, seed=args.seed)
    weights = LossWeights(args.alpha, args.beta, args.gamma)
    train_config = TrainConfig(factor=factor, patch_size=patch_size,
                               batch_size=args.batch, epochs=args.epochs, lr=args.lr,
                               seed=args.seed, weights=weights,
                               augment=not args.no_augment,
                               checkpoint_every=args.checkpoint_every,
                               normal_reduction="mean" if args.mean_normal_loss else "sum")
    if args.checkpoint_dir:
        os.makedirs(args.checkpoint_dir, exist_ok=True)
    train(train_config, dataset, model, log_stream=sys.stdout,
          checkpoint_dir=args.checkpoint_dir)
    save_model(model, args.out)
    return 0


def cmd_upsample(args) -> int:
    cloud = read_xyz(args.input)
    model = None
    if args.method == "model":
        if not args.model:
            return _fail("--method model requires --model CHECKPOINT")
        model = load_model(args.model)
        if args.factor != model.config.factor:
            return _fail(f"--factor {args.factor} does not match checkpoint factor "
                         f"{model.config.factor}")
    result = upsample_cloud(cloud, args.factor, method=args.method, model=model,
                            k=args.k, pattern=_pattern(args.pattern),
                            patch_size=args.patch_size, coverage=args.coverage,
                            seed=args.seed)
    write_xyz(result, args.output)
    print(json.dumps({"points": len(result), "output": args.output}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    for path in (args.pred, args.gt_dense, args.gt_mesh):
        if not os.path.exists(path):
            return _fail(f"missing input file: {path}")
    pred = read_xyz(args.pred)
    gt_dense = read_xyz(args.gt_dense)
    gt_mesh = read_mesh(args.gt_mesh)
    report = report_metrics(pred, gt_dense, gt_mesh, factor=args.factor,
                            inputs={"pred": args.pred, "gt_dense": args.gt_dense,
                                    "gt_mesh": args.gt_mesh})
    if args.recon_mesh:
        if not os.path.exists(args.recon_mesh):
            return _fail(f"missing input file: {args.recon_mesh}")
        recon = read_mesh(args.recon_mesh)
        cd_s, hd_s, jsd_s = surface_compare(recon, gt_mesh, n=args.recon_samples,
                                            seed=args.seed)
        report.surface = {"cd#": cd_s, "hd#": hd_s, "jsd#": jsd_s}
        report.inputs["recon_mesh"] = args.recon_mesh
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_inspect_frames(args) -> int:
    cloud = read_xyz(args.input)
    if args.method == "analytic":
        result = upsample_analytic(cloud, args.factor, k=args.k,
                                   pattern=_pattern(args.pattern),
                                   rng=np.random.default_rng(args.seed),
                                   collect_frames=True)
        frames = result.metadata["frames"]
        deltas = result.deltas
    else:
        if not args.model:
            return _fail("--method model requires --model CHECKPOINT")
        model = load_model(args.model)
        patches = extract_patches(cloud, model.config.patch_size, args.coverage)
        frames = []
        all_deltas = []
        for patch in patches:
            out = model.forward(patch.points)
            for i, t in enumerate(out.t_matrices):
                frames.append(AugmentedJacobian(origin=patch.points[i],
                                                t1=t[:, 0], t2=t[:, 1], t3=t[:, 2]))
            all_deltas.append(out.deltas.reshape(-1))
        deltas = np.concatenate(all_deltas)
    stats = frame_stats(frames, deltas)
    sys.stdout.write(stats.to_tsv())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dataset":
            return cmd_dataset_build(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "upsample":
            return cmd_upsample(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "inspect":
            return cmd_inspect_frames(args)
        return _fail(f"unknown command {args.command!r}")
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, sort_keys=True), file=sys.stderr)
        return 3
    except (FormatError, ValueError, FileNotFoundError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
