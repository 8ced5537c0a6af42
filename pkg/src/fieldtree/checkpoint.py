"""Checkpoint container: raw little-endian float32 tensors plus JSON metadata.

Layout:

    <dir>/meta.json     config, level count, head kind, seed, iteration,
                        stage name, and any training-state extras
    <dir>/tensors.json  name -> {"shape": [...], "file": "...", "offset": 0}
    <dir>/<name>.f32    raw little-endian float32, C order

Reload is bit-exact: parameters are stored and restored as float32 without
any re-encoding.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np
import torch

from .network import HierarchyNet, NetworkConfig

CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


def _safe_filename(name: str) -> str:
    return name.replace("/", "_").replace(".", "__") + ".f32"


def save_tensors(path: str, tensors: dict, meta: dict) -> None:
    """Write named float arrays and metadata to a checkpoint directory."""
    os.makedirs(path, exist_ok=True)
    index = {}
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        fname = _safe_filename(name)
        arr.tofile(os.path.join(path, fname))
        index[name] = {"shape": list(arr.shape), "file": fname, "offset": 0}
    with open(os.path.join(path, "tensors.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")
    meta = dict(meta)
    meta.setdefault("format_version", CHECKPOINT_VERSION)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_tensors(path: str) -> tuple:
    """Read (tensors, meta) back; errors out on partial or mismatched files."""
    meta_path = os.path.join(path, "meta.json")
    index_path = os.path.join(path, "tensors.json")
    for p in (meta_path, index_path):
        if not os.path.exists(p):
            raise CheckpointError(f"missing checkpoint file: {p}")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        with open(index_path, "r", encoding="utf-8") as f:
            index = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint metadata in {path}: {e}") from e
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {meta.get('format_version')}, "
            f"supported {CHECKPOINT_VERSION}"
        )
    tensors = {}
    for name, entry in index.items():
        fpath = os.path.join(path, entry["file"])
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if not os.path.exists(fpath):
            raise CheckpointError(f"missing tensor file: {fpath}")
        if os.path.getsize(fpath) != expected:
            raise CheckpointError(
                f"tensor {name} at {fpath}: {os.path.getsize(fpath)} bytes, "
                f"expected {expected}"
            )
        offset = int(entry.get("offset", 0))
        with open(fpath, "rb") as f:
            f.seek(offset)
            arr = np.frombuffer(f.read(expected), dtype="<f4").reshape(shape)
        tensors[name] = arr.copy()
    return tensors, meta


def network_meta(net: HierarchyNet, iteration: int = 0, stage: str = "init") -> dict:
    cfg = net.config
    return {
        "kind": "hierarchy",
        "config": dataclasses.asdict(cfg),
        "levels": cfg.levels,
        "head_kind": cfg.head_kind,
        "seed": cfg.seed,
        "iteration": iteration,
        "stage": stage,
    }


def save_network(net: HierarchyNet, path: str, extra_meta: dict = None) -> None:
    meta = network_meta(net)
    if extra_meta:
        meta.update(extra_meta)
    tensors = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    save_tensors(path, tensors, meta)


def config_from_meta(meta: dict) -> NetworkConfig:
    raw = dict(meta["config"])
    raw["encoder_channels"] = tuple(raw["encoder_channels"])
    raw["pd_hidden"] = tuple(raw["pd_hidden"])
    return NetworkConfig(**raw)


def check_config_match(meta: dict, config: NetworkConfig) -> None:
    saved = config_from_meta(meta)
    if dataclasses.asdict(saved) != dataclasses.asdict(config):
        diffs = [
            f"{f.name}: checkpoint={getattr(saved, f.name)!r} "
            f"current={getattr(config, f.name)!r}"
            for f in dataclasses.fields(NetworkConfig)
            if getattr(saved, f.name) != getattr(config, f.name)
        ]
        raise CheckpointError("config mismatch: " + "; ".join(diffs))


def load_network(path: str, net: HierarchyNet = None) -> tuple:
    """Restore a network from a checkpoint; builds one from meta if net is None.

    Returns (net, meta). Parameter arrays come back bit-identical to what was
    saved (float32 end to end).
    """
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "hierarchy":
        raise CheckpointError(f"checkpoint kind {meta.get('kind')!r}, expected 'hierarchy'")
    if net is None:
        net = HierarchyNet(config_from_meta(meta))
    else:
        check_config_match(meta, net.config)
    state = net.state_dict()
    param_tensors = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    missing = set(state) - set(param_tensors)
    unexpected = set(param_tensors) - set(state)
    if missing or unexpected:
        raise CheckpointError(
            f"parameter set mismatch; missing={sorted(missing)} "
            f"unexpected={sorted(unexpected)}"
        )
    net.load_state_dict(
        {k: torch.from_numpy(v.copy()) for k, v in param_tensors.items()}
    )
    return net, meta
