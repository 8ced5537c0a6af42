"""Command-line entry point wiring every pipeline stage into reproducible runs.

Commands: gen-data, train, eval, extract, segment, svr-train, svr-infer.
Each run is deterministic given its flags and seed, writes all outputs under a
single --out directory (built in a temp dir, renamed on success, so failures
never leave partial outputs), and drops a resolved_config.txt recording the
exact settings used.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import shutil
import sys
from contextlib import contextmanager

import numpy as np
import torch

from . import checkpoint as ckpt
from . import config as cfgio
from . import report
from .dataset import (
    DataError,
    Dataset,
    build_dataset,
    label_names_for,
    read_dataset,
    write_dataset,
)
from .evaluation import (
    CD_SCALE,
    chamfer,
    per_label_iou,
    sample_surface,
    snap_labels,
    volumetric_iou,
)
from .extraction import (
    export_hierarchy,
    export_hierarchy_from_code,
    marching_cubes,
    union_grid_from_code,
    write_obj,
)
from .losses import LossWeights
from .network import HierarchyNet, NetworkConfig, classify_points
from .shapes import CATEGORIES, CATEGORY_LABELS, OUTSIDE_LABEL
from .svr import (
    SvrConfig,
    infer_codes,
    latent_mse,
    load_image_encoders,
    render_views,
    save_image_encoders,
    target_codes,
    train_image_encoder,
)
from .training import NonFiniteLossError, TrainConfig, train

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class UsageError(ValueError):
    pass


@contextmanager
def atomic_out_dir(path: str):
    """Build outputs in <path>.tmp, swap into place only on success."""
    path = path.rstrip("/")
    tmp = path + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    yield tmp
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def _write_resolved(out_dir: str, command: str, values: dict) -> None:
    cfgio.write_config(
        os.path.join(out_dir, "resolved_config.txt"),
        values,
        header=f"resolved configuration for `fieldtree {command}`",
    )


def _vox_tensor(rec) -> torch.Tensor:
    return torch.from_numpy(rec.voxels.occupancy.astype(np.float32))


# ----------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    with atomic_out_dir(args.out) as tmp:
        dataset = build_dataset(
            args.category,
            args.count,
            args.seed,
            voxel_dim=args.voxel_dim,
            grid_res=args.grid_res,
            with_labels=not args.no_labels,
        )
        write_dataset(dataset, tmp)
        _write_resolved(
            tmp,
            "gen-data",
            {
                "category": args.category,
                "count": args.count,
                "seed": args.seed,
                "voxel_dim": args.voxel_dim,
                "grid_res": args.grid_res,
                "labels": not args.no_labels,
            },
        )
        occ = [float(rec.samples.values.mean()) for rec in dataset.shapes]
        print(
            f"gen-data: {args.count} {args.category} shapes -> {args.out} "
            f"(voxels {args.voxel_dim}^3, {args.grid_res}^3 samples/shape, "
            f"inside fraction {np.mean(occ):.3f} +- {np.std(occ):.3f})"
        )
    return 0


# ----------------------------------------------------------------------------
# train


def _network_config_from_args(args, voxel_dim: int) -> NetworkConfig:
    return NetworkConfig(
        levels=args.levels,
        grid_dim=args.resolution or voxel_dim,
        code_dim=args.code_dim,
        encoder_channels=tuple(args.encoder_channels),
        fd_hidden=args.fd_hidden,
        pd_hidden=tuple(args.pd_hidden),
        head_kind=args.head,
        flat_branches=args.flat_branches,
        inside_threshold=args.tau,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    dataset = read_dataset(args.data)
    net_cfg = _network_config_from_args(args, dataset.manifest.voxel_dim)
    train_cfg = TrainConfig(
        stage_iterations=args.stage_iters,
        batch_shapes=args.batch_shapes,
        points_per_iteration=args.points_per_iter,
        learning_rate=args.lr,
        progressive=not args.no_progressive,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )
    weights = LossWeights(
        alpha=args.alpha,
        beta=args.beta,
        decomposition_enabled=not args.no_decomposition_loss,
    )
    with atomic_out_dir(args.out) as tmp:
        net = HierarchyNet(net_cfg)
        result = train(
            dataset, net, train_cfg, weights, out_dir=tmp, resume_from=args.resume
        )
        resolved = {}
        resolved.update({f"network.{k}": v for k, v in dataclasses.asdict(net_cfg).items()})
        resolved.update({f"train.{k}": v for k, v in dataclasses.asdict(train_cfg).items()})
        resolved.update({f"loss.{k}": v for k, v in dataclasses.asdict(weights).items()})
        resolved["data"] = args.data
        _write_resolved(tmp, "train", resolved)
        if not args.no_figures:
            report.render_loss_curves(
                result.log_path, os.path.join(tmp, "loss_curves.png")
            )
        stages = " -> ".join(s.name for s in result.plan)
        print(f"train: stages [{stages}] done; final objective "
              f"{result.last_report.get('total', float('nan')):.6f}")
        print(f"train: checkpoint at {args.out}/checkpoint, loss log at "
              f"{args.out}/loss_log.txt")
    return 0


# ----------------------------------------------------------------------------
# eval


def _score_shape(pred_grid, gt_grid, pred_mesh, gt_mesh, tau, cd_points, seed):
    """CD (x1000) + IoU for one shape; the identity case scores cd=0, iou=1."""
    iou = volumetric_iou(pred_grid, gt_grid, tau)
    if pred_mesh.empty or gt_mesh.empty:
        cd = float("nan") if pred_mesh.empty != gt_mesh.empty else 0.0
    else:
        # one seed for both sides: identical meshes then score cd = 0 exactly
        a = sample_surface(pred_mesh, cd_points, seed=seed)
        b = sample_surface(gt_mesh, cd_points, seed=seed)
        cd = chamfer(a, b) * CD_SCALE
    return cd, iou


def cmd_eval(args) -> int:
    dataset = read_dataset(args.data)
    category = dataset.manifest.category_names[0]
    tau = args.tau
    if args.self_check:
        net = None
        levels = [0]
    else:
        net, _ = ckpt.load_network(args.checkpoint)
        net.eval()
        levels = list(range(1, net.leaf_level() + 1))
        if dataset.manifest.voxel_dim != net.config.grid_dim:
            raise DataError(
                f"dataset voxel_dim {dataset.manifest.voxel_dim} != network "
                f"grid_dim {net.config.grid_dim}"
            )
    if dataset.manifest.voxel_dim != args.eval_resolution:
        raise DataError(
            f"IoU wants {args.eval_resolution}^3 ground truth, dataset is "
            f"{dataset.manifest.voxel_dim}^3"
        )

    shape_rows = []
    agg_rows = []
    branches_all, gt_labels_all = [], []
    with atomic_out_dir(args.out) as tmp:
        for sidx, rec in enumerate(dataset.shapes):
            gt_mesh = marching_cubes(
                rec.voxels.occupancy.astype(np.float32), iso=0.5
            )
            if args.self_check:
                cd, iou = _score_shape(
                    rec.voxels.occupancy, rec.voxels.occupancy, gt_mesh, gt_mesh,
                    tau, args.cd_points, seed=args.seed + 2 * sidx,
                )
                shape_rows.append(
                    {"shape_id": rec.shape_id, "level": 0, "cd": cd, "iou": iou}
                )
                continue
            with torch.no_grad():
                code = net.encode(_vox_tensor(rec))
            for level in levels:
                iou_grid = union_grid_from_code(
                    net, code, level, args.eval_resolution
                )
                pred_mesh = marching_cubes(
                    union_grid_from_code(net, code, level, args.mc_resolution),
                    iso=tau,
                )
                cd, iou = _score_shape(
                    iou_grid, rec.voxels.occupancy, pred_mesh, gt_mesh,
                    tau, args.cd_points, seed=args.seed + 2 * sidx,
                )
                shape_rows.append(
                    {"shape_id": rec.shape_id, "level": level, "cd": cd, "iou": iou}
                )
            if dataset.manifest.has_labels:
                pts = torch.from_numpy(rec.samples.points.astype(np.float32))
                with torch.no_grad():
                    tree = net.forward_from_code(code, pts)
                branches_all.append(classify_points(tree, net.leaf_level(), tau))
                gt_labels_all.append(rec.samples.labels)

        label_fig = {}
        leaf = levels[-1]
        for level in levels:
            rows = [r for r in shape_rows if r["level"] == level]
            cds = [r["cd"] for r in rows if np.isfinite(r["cd"])]
            agg_rows.append(
                (category, "cd", level, float(np.mean(cds)) if cds else float("nan"))
            )
            agg_rows.append(
                (category, "iou", level, float(np.mean([r["iou"] for r in rows])))
            )
        if branches_all and not args.self_check:
            pred = np.concatenate(branches_all)
            gt = np.concatenate(gt_labels_all)
            mapping = snap_labels(pred, gt)
            names = label_names_for(dataset) or CATEGORY_LABELS.get(category)
            label_ids = list(range(len(names))) if names else None
            per_label, miou = per_label_iou(pred, gt, mapping, label_set=label_ids)
            agg_rows.append((category, "miou", leaf, miou))
            for lab, val in sorted(per_label.items()):
                name = names[lab] if names and lab < len(names) else str(lab)
                agg_rows.append((category, f"iou_label_{name}", leaf, val))
                label_fig[lab] = (name, val)
            import json

            with open(os.path.join(tmp, "snapping.json"), "w", encoding="utf-8") as f:
                json.dump(
                    {str(k): v for k, v in sorted(mapping.branch_to_label.items())},
                    f, indent=2, sort_keys=True,
                )
                f.write("\n")

        report.write_metrics_csv(os.path.join(tmp, "metrics.csv"), agg_rows)
        report.write_metrics_table(
            os.path.join(tmp, "metrics.txt"), agg_rows, f"evaluation: {args.data}"
        )
        report.write_shape_csv(os.path.join(tmp, "shapes.csv"), shape_rows)
        if not args.no_figures:
            leaf_rows = [r for r in shape_rows if r["level"] == leaf]
            report.render_metric_figure(
                leaf_rows, label_fig, os.path.join(tmp, "metrics.png")
            )
        _write_resolved(
            tmp,
            "eval",
            {
                "checkpoint": args.checkpoint or "",
                "data": args.data,
                "eval_resolution": args.eval_resolution,
                "mc_resolution": args.mc_resolution,
                "cd_points": args.cd_points,
                "tau": tau,
                "seed": args.seed,
                "self_check": bool(args.self_check),
            },
        )
        for cat, metric, level, value in agg_rows:
            print(f"eval: {cat} {metric} level={level}: {value:.6f}")
    return 0


# ----------------------------------------------------------------------------
# extract / segment


def cmd_extract(args) -> int:
    dataset = read_dataset(args.data)
    net, _ = ckpt.load_network(args.checkpoint)
    net.eval()
    ids = {rec.shape_id: rec for rec in dataset.shapes}
    if args.shape not in ids:
        raise DataError(f"shape {args.shape!r} not in dataset {args.data}")
    rec = ids[args.shape]
    with atomic_out_dir(args.out) as tmp:
        doc = export_hierarchy(
            net,
            _vox_tensor(rec),
            tmp,
            resolution=args.mc_resolution,
            tau=args.tau,
            only_level=args.level,
        )
        _write_resolved(
            tmp,
            "extract",
            {
                "checkpoint": args.checkpoint,
                "data": args.data,
                "shape": args.shape,
                "mc_resolution": args.mc_resolution,
                "level": args.level or "all",
                "tau": args.tau if args.tau is not None else net.config.inside_threshold,
            },
        )
        print(
            f"extract: {args.shape} -> {args.out} "
            f"({len(doc['nodes'])} nodes, levels {doc['levels']})"
        )
    return 0


def cmd_segment(args) -> int:
    dataset = read_dataset(args.data)
    net, _ = ckpt.load_network(args.checkpoint)
    net.eval()
    if not dataset.manifest.has_labels:
        raise DataError("segment needs a labeled dataset")
    with atomic_out_dir(args.out) as tmp:
        os.makedirs(os.path.join(tmp, "branches"))
        pred_all, gt_all = [], []
        for rec in dataset.shapes:
            pts = torch.from_numpy(rec.samples.points.astype(np.float32))
            with torch.no_grad():
                tree = net.forward_hierarchy(_vox_tensor(rec), pts)
            branches = classify_points(tree, net.leaf_level(), args.tau)
            out = branches.astype(np.int16)
            out8 = np.where(out < 0, OUTSIDE_LABEL, out).astype(np.uint8)
            out8.tofile(os.path.join(tmp, "branches", f"{rec.shape_id}.u8"))
            pred_all.append(branches)
            gt_all.append(rec.samples.labels)
        mapping = snap_labels(np.concatenate(pred_all), np.concatenate(gt_all))
        import json

        with open(os.path.join(tmp, "snapping.json"), "w", encoding="utf-8") as f:
            json.dump(
                {str(k): v for k, v in sorted(mapping.branch_to_label.items())},
                f, indent=2, sort_keys=True,
            )
            f.write("\n")
        _write_resolved(
            tmp,
            "segment",
            {"checkpoint": args.checkpoint, "data": args.data, "tau": args.tau},
        )
        print(
            f"segment: {len(dataset.shapes)} shapes -> {args.out}/branches "
            f"(branch->label votes: {mapping.branch_to_label})"
        )
    return 0


# ----------------------------------------------------------------------------
# svr


def cmd_svr_train(args) -> int:
    dataset = read_dataset(args.data)
    net3d, _ = ckpt.load_network(args.checkpoint)
    net3d.eval()
    cfg = SvrConfig(
        iterations=args.iters,
        batch=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        views=tuple(args.views),
        shading=args.shading,
    )
    with atomic_out_dir(args.out) as tmp:
        encoders, losses = train_image_encoder(dataset, net3d, cfg, out_dir=tmp)
        save_image_encoders(
            encoders, cfg, os.path.join(tmp, "checkpoint"),
            extra_meta={"net3d_checkpoint": args.checkpoint},
        )
        _write_resolved(
            tmp,
            "svr-train",
            {
                "checkpoint": args.checkpoint,
                "data": args.data,
                **{f"svr.{k}": v for k, v in dataclasses.asdict(cfg).items()},
            },
        )
        if not args.no_figures:
            report.render_svr_loss(
                os.path.join(tmp, "svr_loss_log.txt"),
                os.path.join(tmp, "svr_loss.png"),
            )
        print(f"svr-train: final latent MSE {losses[-1]:.6f} -> {args.out}/checkpoint")
    return 0


def cmd_svr_infer(args) -> int:
    dataset = read_dataset(args.data)
    net3d, _ = ckpt.load_network(args.checkpoint)
    net3d.eval()
    encoders, svr_cfg, _ = load_image_encoders(args.svr_checkpoint)
    ids = {rec.shape_id: rec for rec in dataset.shapes}
    if args.shape not in ids:
        raise DataError(f"shape {args.shape!r} not in dataset {args.data}")
    rec = ids[args.shape]
    images = render_views(rec.voxels.occupancy, svr_cfg.views, svr_cfg.shading)
    with atomic_out_dir(args.out) as tmp:
        code = infer_codes(encoders, images[None])[0]
        doc = export_hierarchy_from_code(
            net3d, code, tmp, resolution=args.mc_resolution, tau=args.tau
        )
        _write_resolved(
            tmp,
            "svr-infer",
            {
                "checkpoint": args.checkpoint,
                "svr_checkpoint": args.svr_checkpoint,
                "data": args.data,
                "shape": args.shape,
                "views": svr_cfg.views,
                "mc_resolution": args.mc_resolution,
            },
        )
        print(
            f"svr-infer: {args.shape} via views {','.join(svr_cfg.views)} -> "
            f"{args.out} ({len(doc['nodes'])} nodes)"
        )
    return 0


# ----------------------------------------------------------------------------
# argument plumbing


_CONFIG_CONVERTERS = {
    "levels": int, "code_dim": int, "fd_hidden": int, "stage_iters": int,
    "points_per_iter": int, "batch_shapes": int, "checkpoint_every": int,
    "seed": int, "resolution": int, "flat_branches": int, "iters": int,
    "batch": int, "lr": float, "alpha": float, "beta": float, "tau": float,
    "no_decomposition_loss": cfgio.as_bool, "no_progressive": cfgio.as_bool,
    "no_figures": cfgio.as_bool, "head": str, "data": str, "out": str,
    "pd_hidden": cfgio.as_int_tuple, "encoder_channels": cfgio.as_int_tuple,
    "views": cfgio.as_str_tuple, "shading": str,
}


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list) -> None:
    """--config file values become the subcommand's defaults; flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    command = next((a for a in rest if not a.startswith("-")), None)
    sub = parser._subparsers._group_actions[0].choices.get(command)
    if sub is None:
        raise UsageError(f"--config needs a known command, got {command!r}")
    dests = {a.dest for a in sub._actions}
    defaults = {}
    for key, raw in cfgio.load_config(known.config).items():
        if key not in _CONFIG_CONVERTERS or key not in dests:
            raise UsageError(
                f"config key {key!r} in {known.config} is not a `{command}` setting"
            )
        defaults[key] = _CONFIG_CONVERTERS[key](raw)
    sub.set_defaults(**defaults)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fieldtree",
        description=(
            "Hierarchical implicit-field shape decomposition: generate toy data, "
            "train, evaluate, extract surfaces, segment, and reconstruct from a "
            "single view."
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a procedural toy dataset")
    g.add_argument("--category", required=True, choices=CATEGORIES)
    g.add_argument("--count", type=int, required=True, help="number of shapes")
    g.add_argument("--seed", type=int, default=0, help="base seed; shape i uses seed+i")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--voxel-dim", type=int, default=32, help="voxel grid resolution")
    g.add_argument("--grid-res", type=int, default=16, choices=(16, 32, 64),
                   help="point-sample lattice (16^3=4096 training samples)")
    g.add_argument("--no-labels", action="store_true", help="omit part labels")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a hierarchy on a dataset")
    t.add_argument("--config", help="key=value config file; flags override it")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="run output directory")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--levels", type=int, default=2, help="tree depth N")
    t.add_argument("--head", choices=("gaussian", "sphere", "point"),
                   default="gaussian", help="per-branch head kind")
    t.add_argument("--flat-branches", type=int, default=None, metavar="K",
                   help="no-hierarchy ablation with K branches")
    t.add_argument("--no-decomposition-loss", action="store_true",
                   help="ablation: drop the parent-child union penalty")
    t.add_argument("--no-progressive", action="store_true",
                   help="ablation: train all levels jointly in one stage")
    t.add_argument("--stage-iters", type=int, default=3000,
                   help="iterations per stage")
    t.add_argument("--resolution", type=int, default=None,
                   help="encoder input resolution (defaults to dataset voxel dim)")
    t.add_argument("--points-per-iter", type=int, default=4096)
    t.add_argument("--batch-shapes", type=int, default=1)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--beta", type=float, default=10.0)
    t.add_argument("--tau", type=float, default=0.5, help="inside threshold")
    t.add_argument("--code-dim", type=int, default=128)
    t.add_argument("--fd-hidden", type=int, default=256)
    t.add_argument("--pd-hidden", type=int, nargs=2, default=(256, 256))
    t.add_argument("--encoder-channels", type=int, nargs="+",
                   default=(32, 64, 128, 256))
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--resume", default=None, help="checkpoint directory to resume")
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint against a dataset")
    e.add_argument("--checkpoint", help="trained checkpoint directory")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--eval-resolution", type=int, default=32,
                   help="IoU grid resolution")
    e.add_argument("--mc-resolution", type=int, default=64,
                   help="marching-cubes resolution for CD meshes")
    e.add_argument("--cd-points", type=int, default=4096)
    e.add_argument("--tau", type=float, default=0.5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--self-check", action="store_true",
                   help="score ground truth against itself (cd=0, iou=1)")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(fn=cmd_eval)

    x = sub.add_parser("extract", help="export meshes + hierarchy.json for one shape")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--shape", required=True, help="shape id, e.g. table_000003")
    x.add_argument("--out", required=True)
    x.add_argument("--level", type=int, default=None,
                   help="export only this level (default: all)")
    x.add_argument("--mc-resolution", type=int, default=64)
    x.add_argument("--tau", type=float, default=None)
    x.set_defaults(fn=cmd_extract)

    s = sub.add_parser("segment", help="write per-point leaf branch labels")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tau", type=float, default=0.5)
    s.set_defaults(fn=cmd_segment)

    v = sub.add_parser("svr-train", help="train the image encoder by latent MSE")
    v.add_argument("--checkpoint", required=True, help="pretrained 3D checkpoint")
    v.add_argument("--data", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--iters", type=int, default=2000)
    v.add_argument("--batch", type=int, default=16)
    v.add_argument("--lr", type=float, default=1e-3)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--views", nargs="+", default=["y+"],
                   help="view ids from x+/x-/y+/y-/z+/z-")
    v.add_argument("--shading", choices=("depth", "silhouette"), default="depth")
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(fn=cmd_svr_train)

    i = sub.add_parser("svr-infer", help="hierarchy from a single rendered view")
    i.add_argument("--svr-checkpoint", required=True)
    i.add_argument("--checkpoint", required=True, help="3D decoder checkpoint")
    i.add_argument("--data", required=True)
    i.add_argument("--shape", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--mc-resolution", type=int, default=64)
    i.add_argument("--tau", type=float, default=None)
    i.set_defaults(fn=cmd_svr_infer)

    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "eval":
            if not args.self_check and not args.checkpoint:
                raise UsageError("eval needs --checkpoint (or --self-check)")
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except cfgio.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as e:
        print(f"numeric divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ckpt.CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
