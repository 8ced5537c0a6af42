"""Progressive training schedule with parameter freezing and exact resume.

The progressive plan for N levels has N+1 stages: bootstrap level 1, then one
stage per deeper level with the encoder and all earlier levels frozen, then a
reconstruction-only fine-tune of everything. Every stage reuses the same
iteration budget. The non-progressive ablation trains all parameters jointly
in a single stage.

Each iteration draws one (or batch_shapes) dataset shapes uniformly with
replacement plus a fresh with-replacement subsample of points, computes the
full field tree for monitoring, and steps only the stage's trainable groups.
Checkpoints capture parameters, optimizer moments, the stage cursor, and the
sampler's bit generator state, so a resumed run reproduces the uninterrupted
run bit for bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt
from .dataset import Dataset
from .losses import LossWeights, decomposition_total, recon_level
from .network import HierarchyNet


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term diverges; names the offending term."""


@dataclass
class TrainConfig:
    stage_iterations: int = 3000  # paper-scale runs use 100000
    batch_shapes: int = 1
    points_per_iteration: int = 4096
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    progressive: bool = True
    seed: int = 0
    checkpoint_every: int = 0  # 0 = stage boundaries only

    def __post_init__(self):
        if self.stage_iterations < 1:
            raise ValueError("stage_iterations must be >= 1")
        if self.batch_shapes < 1:
            raise ValueError("batch_shapes must be >= 1")


@dataclass
class Stage:
    name: str
    trainable: tuple  # parameter group names
    frozen: tuple
    loss_id: str      # "L<j>" (full loss up to level j) or "recon<N>"
    iterations: int

    @property
    def max_level(self) -> int:
        return int(self.loss_id[1:]) if self.loss_id.startswith("L") else int(
            self.loss_id[len("recon"):]
        )

    @property
    def with_decomposition(self) -> bool:
        return self.loss_id.startswith("L")


def build_stage_plan(
    levels: int, progressive: bool, stage_iterations: int, flat: bool = False
) -> list:
    """Stage list covering every instantiated parameter group exactly once per stage."""
    n = 1 if flat else levels
    groups = ["encoder"] + [f"part_decoder_{j}" for j in range(1, n + 1)]
    groups += [f"feature_decoder_{j}" for j in range(1, n)]
    all_groups = tuple(groups)

    def stage(name, trainable, loss_id, iters):
        trainable = tuple(trainable)
        frozen = tuple(g for g in all_groups if g not in trainable)
        return Stage(name, trainable, frozen, loss_id, iters)

    if not progressive:
        return [stage("joint", all_groups, f"L{n}", stage_iterations)]
    plan = [stage("initial", ("encoder", "part_decoder_1"), "L1", stage_iterations)]
    for j in range(2, n + 1):
        plan.append(
            stage(
                f"level{j}",
                (f"feature_decoder_{j - 1}", f"part_decoder_{j}"),
                f"L{j}",
                stage_iterations,
            )
        )
    plan.append(stage("finetune", all_groups, f"recon{n}", stage_iterations))
    return plan


def group_digest(net: HierarchyNet, group: str) -> str:
    """SHA-256 over a parameter group's raw float32 bytes (order-stable)."""
    h = hashlib.sha256()
    module = net.parameter_groups()[group]
    for _, p in sorted(module.state_dict().items()):
        h.update(np.ascontiguousarray(p.detach().cpu().numpy(), dtype="<f4").tobytes())
    return h.hexdigest()


@dataclass
class TrainResult:
    net: HierarchyNet
    plan: list
    log_path: str
    checkpoint_path: str
    last_report: dict = field(default_factory=dict)


def _loss_columns(n_levels: int) -> list:
    return ["iteration", "stage"] + [f"recon_{j}" for j in range(1, n_levels + 1)] + [
        "hie",
        "total",
    ]


def read_loss_log(path: str) -> list:
    """Parse the loss log into a list of dicts (header taken from the # line)."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = None
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                header = line[1:].split(",")
                continue
            parts = line.split(",")
            row = dict(zip(header, parts))
            for k in header:
                if k not in ("stage",):
                    row[k] = float(row[k])
            rows.append(row)
    return rows


class _ShapeCache:
    """Per-shape torch tensors, built once per training run."""

    def __init__(self, dataset: Dataset):
        self.vox = [
            torch.from_numpy(rec.voxels.occupancy.astype(np.float32))
            for rec in dataset.shapes
        ]
        self.points = [
            torch.from_numpy(np.ascontiguousarray(rec.samples.points, dtype=np.float32))
            for rec in dataset.shapes
        ]
        self.values = [
            torch.from_numpy(rec.samples.values.astype(np.float32))
            for rec in dataset.shapes
        ]
        self.n_points = len(dataset.shapes[0].samples)


def _stage_params(net: HierarchyNet, stage: Stage) -> list:
    """(name, param) pairs for the stage's trainable groups, in a fixed order."""
    groups = net.parameter_groups()
    out = []
    for gname in groups:
        if gname not in stage.trainable:
            continue
        for pname, p in groups[gname].named_parameters():
            out.append((f"{_group_attr(net, gname)}.{pname}", p))
    return out


def _group_attr(net: HierarchyNet, gname: str) -> str:
    """state_dict prefix of a parameter group."""
    if gname == "encoder":
        return "encoder"
    kind, idx = gname.rsplit("_", 1)
    if kind == "part_decoder":
        return f"part_decoders.{int(idx) - 1}"
    return f"feature_decoders.{int(idx) - 1}"


def _save_train_checkpoint(
    path: str,
    net: HierarchyNet,
    cfg: TrainConfig,
    weights: LossWeights,
    stage_idx: int,
    iter_in_stage: int,
    global_iter: int,
    stage_name: str,
    optimizer: torch.optim.Adam,
    opt_params: list,
    rng: np.random.Generator,
) -> None:
    tensors = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    adam_steps = {}
    if optimizer is not None:
        for name, p in opt_params:
            state = optimizer.state.get(p)
            if not state:
                continue
            tensors[f"adam.exp_avg.{name}"] = state["exp_avg"].numpy()
            tensors[f"adam.exp_avg_sq.{name}"] = state["exp_avg_sq"].numpy()
            adam_steps[name] = int(state["step"].item())
    meta = ckpt.network_meta(net, iteration=global_iter, stage=stage_name)
    meta.update(
        {
            "train_config": dataclasses.asdict(cfg),
            "loss_weights": dataclasses.asdict(weights),
            "stage_index": stage_idx,
            "iter_in_stage": iter_in_stage,
            "adam_step": adam_steps,
            "rng_state": rng.bit_generator.state,
        }
    )
    ckpt.save_tensors(path, tensors, meta)


def load_train_state(path: str, net: HierarchyNet = None):
    """Restore (net, meta, tensors) for resuming; config must match `net` if given."""
    tensors, meta = ckpt.load_tensors(path)
    if net is None:
        net = HierarchyNet(ckpt.config_from_meta(meta))
    else:
        ckpt.check_config_match(meta, net.config)
    params = {k: torch.from_numpy(v.copy()) for k, v in tensors.items()
              if not k.startswith("adam.")}
    net.load_state_dict(params)
    return net, meta, tensors


def train(
    dataset: Dataset,
    net: HierarchyNet,
    cfg: TrainConfig,
    weights: LossWeights = None,
    out_dir: str = ".",
    resume_from: str = None,
) -> TrainResult:
    """Run the staged schedule; writes loss_log.txt and checkpoints under out_dir."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dataset.manifest.voxel_dim != net.config.grid_dim:
        raise ValueError(
            f"dataset voxel_dim {dataset.manifest.voxel_dim} != network grid_dim "
            f"{net.config.grid_dim}"
        )
    weights = weights or LossWeights()
    plan = build_stage_plan(
        net.config.levels, cfg.progressive, cfg.stage_iterations, flat=net.config.flat
    )
    n_levels = 1 if net.config.flat else net.config.levels

    os.makedirs(out_dir, exist_ok=True)
    ckpt_root = os.path.join(out_dir, "checkpoints")
    log_path = os.path.join(out_dir, "loss_log.txt")

    rng = np.random.default_rng(cfg.seed)
    stage_start, iter_start, global_iter = 0, 0, 0
    resume_tensors, resume_meta = None, None
    if resume_from is not None:
        net, resume_meta, resume_tensors = load_train_state(resume_from, net)
        if resume_meta.get("train_config") != dataclasses.asdict(cfg):
            raise ckpt.CheckpointError(
                "training config mismatch between checkpoint and current run"
            )
        stage_start = int(resume_meta["stage_index"])
        iter_start = int(resume_meta["iter_in_stage"])
        global_iter = int(resume_meta["iteration"])
        rng.bit_generator.state = resume_meta["rng_state"]

    cache = _ShapeCache(dataset)
    n_shapes = len(dataset)
    n_pts = cache.n_points

    log = open(log_path, "a" if resume_from else "w", encoding="utf-8")
    if not resume_from:
        log.write("#" + ",".join(_loss_columns(n_levels)) + "\n")

    last_report = {}
    optimizer, opt_params = None, []
    try:
        for stage_idx in range(stage_start, len(plan)):
            stage = plan[stage_idx]
            trainable_groups = set(stage.trainable)
            groups = net.parameter_groups()
            for gname, module in groups.items():
                flag = gname in trainable_groups
                for p in module.parameters():
                    p.requires_grad_(flag)
            opt_params = _stage_params(net, stage)
            optimizer = torch.optim.Adam(
                [p for _, p in opt_params],
                lr=cfg.learning_rate,
                betas=(cfg.beta1, cfg.beta2),
                eps=cfg.epsilon,
                foreach=False,
            )
            if resume_tensors is not None and stage_idx == stage_start and iter_start > 0:
                _restore_adam(optimizer, opt_params, resume_tensors, resume_meta)
            code_cache = None
            if "encoder" not in trainable_groups:
                with torch.no_grad():
                    code_cache = [net.encode(v) for v in cache.vox]

            first_iter = iter_start if stage_idx == stage_start else 0
            for it in range(first_iter, stage.iterations):
                objective, report = _train_step(
                    net, cache, rng, cfg, weights, stage, code_cache, n_shapes, n_pts,
                    global_iter + 1,
                )
                optimizer.zero_grad(set_to_none=True)
                objective.backward()
                optimizer.step()
                global_iter += 1
                _write_log_row(log, global_iter, stage.name, report, n_levels)
                last_report = report
                if cfg.checkpoint_every and global_iter % cfg.checkpoint_every == 0:
                    log.flush()
                    _save_train_checkpoint(
                        os.path.join(ckpt_root, f"iter{global_iter:07d}"),
                        net, cfg, weights, stage_idx, it + 1, global_iter,
                        stage.name, optimizer, opt_params, rng,
                    )
            log.flush()
            _save_train_checkpoint(
                os.path.join(ckpt_root, f"stage{stage_idx:02d}_{stage.name}"),
                net, cfg, weights, stage_idx + 1, 0, global_iter,
                stage.name, optimizer, opt_params, rng,
            )
    finally:
        log.close()

    final_path = os.path.join(out_dir, "checkpoint")
    _save_train_checkpoint(
        final_path, net, cfg, weights, len(plan), 0, global_iter,
        plan[-1].name, optimizer, opt_params, rng,
    )
    return TrainResult(net, plan, log_path, final_path, last_report)


def _restore_adam(optimizer, opt_params, tensors, meta) -> None:
    steps = meta.get("adam_step", {})
    for name, p in opt_params:
        k1, k2 = f"adam.exp_avg.{name}", f"adam.exp_avg_sq.{name}"
        if k1 not in tensors:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(float(steps.get(name, 0))),
            "exp_avg": torch.from_numpy(tensors[k1].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[k2].copy()),
        }


def _train_step(
    net, cache, rng, cfg, weights, stage, code_cache, n_shapes, n_pts, iteration
):
    recon_sums = None
    deco_sum = None
    obj_sum = None
    for _ in range(cfg.batch_shapes):
        sidx = int(rng.integers(n_shapes))
        pidx = rng.integers(n_pts, size=cfg.points_per_iteration)
        points = cache.points[sidx][torch.from_numpy(pidx)]
        values = cache.values[sidx][torch.from_numpy(pidx)]
        if code_cache is not None:
            tree = net.forward_from_code(code_cache[sidx], points)
        else:
            tree = net.forward_hierarchy(cache.vox[sidx], points)
        recon = [recon_level(tree, j, values) for j in range(1, tree.n_levels + 1)]
        deco = decomposition_total(tree)
        obj = weights.alpha * sum(recon[: stage.max_level])
        if stage.with_decomposition and weights.decomposition_enabled:
            obj = obj + weights.beta * decomposition_total(tree, stage.max_level)
        recon_sums = recon if recon_sums is None else [a + b for a, b in zip(recon_sums, recon)]
        deco_sum = deco if deco_sum is None else deco_sum + deco
        obj_sum = obj if obj_sum is None else obj_sum + obj
    k = cfg.batch_shapes
    objective = obj_sum / k
    report = {
        "recon": [float(r.detach()) / k for r in recon_sums],
        "hie": float(deco_sum.detach()) / k,
        "total": float(objective.detach()),
    }
    _check_finite(report, stage, iteration)
    return objective, report


def _check_finite(report, stage, iteration) -> None:
    for j, r in enumerate(report["recon"], start=1):
        if not np.isfinite(r):
            raise NonFiniteLossError(
                f"non-finite recon_{j} at iteration {iteration} (stage {stage.name})"
            )
    if not np.isfinite(report["hie"]):
        raise NonFiniteLossError(
            f"non-finite decomposition loss at iteration {iteration} "
            f"(stage {stage.name})"
        )
    if not np.isfinite(report["total"]):
        raise NonFiniteLossError(
            f"non-finite total loss at iteration {iteration} (stage {stage.name})"
        )


def _write_log_row(log, iteration, stage_name, report, n_levels) -> None:
    vals = [f"{iteration}", stage_name]
    vals += [f"{r:.9e}" for r in report["recon"]]
    vals += [f"{report['hie']:.9e}", f"{report['total']:.9e}"]
    log.write(",".join(vals) + "\n")
