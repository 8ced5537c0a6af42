"""Single-view reconstruction: silhouette rendering, image-encoder training by
latent regression, and hierarchy inference from one image.

The image encoder regresses the frozen 3D encoder's code for the rendered
shape under mean squared error; inference swaps it in for the 3D encoder and
decodes the hierarchy through the very same decoder modules.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from .dataset import Dataset
from .network import LEAKY_SLOPE, HierarchyNet

IMAGE_SIZE = 64
VIEW_IDS = ("x+", "x-", "y+", "y-", "z+", "z-")
IMAGES_VERSION = 1

_AXIS = {"x": 0, "y": 1, "z": 2}


def render_view(vox: np.ndarray, view_id: str, shading: str = "depth") -> np.ndarray:
    """Orthographic occupancy projection to a 64x64 float image in [0, 1].

    The ray direction follows the view axis sign; a pixel is the max occupancy
    along its ray, optionally shaded by 1 - first_hit_depth / D. Grids smaller
    than 64 are upscaled by nearest-neighbour pixel repetition.
    """
    if len(view_id) != 2 or view_id[0] not in _AXIS or view_id[1] not in "+-":
        raise ValueError(f"bad view id {view_id!r}, expected e.g. 'y+'")
    occ = np.asarray(vox) > 0
    d = occ.shape[0]
    if IMAGE_SIZE % d:
        raise ValueError(f"grid dim {d} must divide image size {IMAGE_SIZE}")
    ray = np.moveaxis(occ, _AXIS[view_id[0]], 0)
    if view_id[1] == "-":
        ray = ray[::-1]
    hit = ray.any(axis=0)
    if shading == "depth":
        depth = np.argmax(ray, axis=0)
        img = np.where(hit, 1.0 - depth / d, 0.0)
    elif shading == "silhouette":
        img = hit.astype(np.float64)
    else:
        raise ValueError(f"unknown shading {shading!r}")
    k = IMAGE_SIZE // d
    img = np.repeat(np.repeat(img, k, axis=0), k, axis=1)
    return img.astype(np.float32)


def quantize_image(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_views(vox: np.ndarray, views, shading: str = "depth") -> np.ndarray:
    """Quantized uint8 images, one per view id: (n_views, 64, 64)."""
    return np.stack([quantize_image(render_view(vox, v, shading)) for v in views])


def save_images(path: str, images: np.ndarray, shape_ids: list, view_ids) -> None:
    """Raw byte-array image container: images.u8 + manifest.json."""
    os.makedirs(path, exist_ok=True)
    n, v, h, w = images.shape
    images.astype(np.uint8).tofile(os.path.join(path, "images.u8"))
    manifest = {
        "version": IMAGES_VERSION,
        "count": n,
        "views_per_shape": v,
        "height": h,
        "width": w,
        "view_ids": list(view_ids),
        "shape_ids": list(shape_ids),
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_images(path: str) -> tuple:
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    n, v = manifest["count"], manifest["views_per_shape"]
    h, w = manifest["height"], manifest["width"]
    raw = np.fromfile(os.path.join(path, "images.u8"), dtype=np.uint8)
    if raw.size != n * v * h * w:
        raise ValueError(
            f"images.u8 holds {raw.size} bytes, manifest implies {n * v * h * w}"
        )
    return raw.reshape(n, v, h, w), manifest


@dataclass
class SvrConfig:
    iterations: int = 2000
    batch: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    views: tuple = ("y+",)
    shading: str = "depth"
    channels: tuple = (32, 64, 128)


class ImageEncoder(nn.Module):
    """Strided 2D convs to 8x8, one valid 8x8 conv to the code, sigmoid output."""

    def __init__(self, code_dim: int, channels: tuple = (32, 64, 128), seed: int = 0):
        super().__init__()
        self.code_dim = code_dim
        self.channels = tuple(channels)
        convs = []
        c_in = 1
        for c_out in channels:
            convs.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1))
            c_in = c_out
        convs.append(nn.Conv2d(c_in, code_dim, 8, stride=1, padding=0))
        self.convs = nn.ModuleList(convs)
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for p in self.parameters():
                if p.ndim > 1:
                    p.normal_(0.0, 0.02, generator=g)
                else:
                    p.zero_()

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 1, 64, 64) images in [0, 1] -> (B, code_dim) codes in (0, 1)."""
        h = images
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        return torch.sigmoid(self.convs[-1](h)).reshape(images.shape[0], self.code_dim)


def target_codes(net3d: HierarchyNet, dataset: Dataset) -> torch.Tensor:
    """Frozen 3D-encoder codes for every dataset shape: (n, code_dim)."""
    with torch.no_grad():
        codes = [
            net3d.encode(torch.from_numpy(rec.voxels.occupancy.astype(np.float32)))
            for rec in dataset.shapes
        ]
    return torch.stack(codes)


def train_image_encoder(
    dataset: Dataset, net3d: HierarchyNet, cfg: SvrConfig, out_dir: str = None
) -> tuple:
    """Fit one image encoder per view against the frozen 3D codes.

    Returns ({view: ImageEncoder}, losses). The 3D network is never modified;
    its parameters feed the targets under no_grad only. When out_dir is given,
    the rendered image container and a latent-MSE log are written there.
    """
    for p in net3d.parameters():
        p.requires_grad_(False)
    codes = target_codes(net3d, dataset)
    images = np.stack(
        [render_views(rec.voxels.occupancy, cfg.views, cfg.shading) for rec in dataset.shapes]
    )  # (n, V, 64, 64) uint8
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_images(
            os.path.join(out_dir, "images"),
            images,
            [rec.shape_id for rec in dataset.shapes],
            cfg.views,
        )
    imgs = torch.from_numpy(images.astype(np.float32) / 255.0)

    encoders = {
        v: ImageEncoder(net3d.config.code_dim, cfg.channels, seed=cfg.seed + i)
        for i, v in enumerate(cfg.views)
    }
    params = [p for enc in encoders.values() for p in enc.parameters()]
    opt = torch.optim.Adam(params, lr=cfg.learning_rate, foreach=False)
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)
    losses = []
    log = open(os.path.join(out_dir, "svr_loss_log.txt"), "w") if out_dir else None
    if log:
        log.write("#iteration,mse\n")
    for it in range(cfg.iterations):
        idx = rng.integers(n, size=min(cfg.batch, n))
        tidx = torch.from_numpy(idx)
        target = codes[tidx]
        loss = imgs.new_zeros(())
        for vi, view in enumerate(cfg.views):
            pred = encoders[view](imgs[tidx, vi][:, None])
            loss = loss + F.mse_loss(pred, target)
        loss = loss / len(cfg.views)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        if log:
            log.write(f"{it + 1},{losses[-1]:.9e}\n")
    if log:
        log.close()
    return encoders, losses


def latent_mse(encoders: dict, images: np.ndarray, codes: torch.Tensor) -> float:
    """Mean squared latent error of the view-averaged prediction."""
    pred = infer_codes(encoders, images)
    return float(F.mse_loss(pred, codes))


def infer_codes(encoders: dict, images: np.ndarray) -> torch.Tensor:
    """(n, V, 64, 64) uint8 (or [0,1] float) images -> (n, code_dim) view-averaged codes."""
    images = np.asarray(images)
    scale = 255.0 if images.dtype == np.uint8 else 1.0
    imgs = torch.from_numpy(images.astype(np.float32) / scale)
    with torch.no_grad():
        per_view = [
            encoders[v](imgs[:, i][:, None]) for i, v in enumerate(encoders)
        ]
    return torch.stack(per_view).mean(dim=0)


def svr_infer(
    images: np.ndarray, encoders: dict, net3d: HierarchyNet, points: torch.Tensor
):
    """Decode the hierarchy from one image set via the shared decoder path."""
    code = infer_codes(encoders, images[None] if images.ndim == 3 else images)[0]
    return net3d.forward_from_code(code, points)


def save_image_encoders(encoders: dict, cfg: SvrConfig, path: str, extra_meta=None):
    tensors = {}
    for view, enc in encoders.items():
        for k, v in enc.state_dict().items():
            tensors[f"{view}.{k}"] = v.numpy()
    meta = {
        "kind": "image_encoder",
        "svr_config": dataclasses.asdict(cfg),
        "code_dim": next(iter(encoders.values())).code_dim,
        "views": list(encoders),
        "seed": cfg.seed,
        "iteration": cfg.iterations,
        "stage": "svr",
    }
    if extra_meta:
        meta.update(extra_meta)
    ckpt.save_tensors(path, tensors, meta)


def load_image_encoders(path: str) -> tuple:
    tensors, meta = ckpt.load_tensors(path)
    if meta.get("kind") != "image_encoder":
        raise ckpt.CheckpointError(
            f"checkpoint kind {meta.get('kind')!r}, expected 'image_encoder'"
        )
    cfg_raw = dict(meta["svr_config"])
    cfg_raw["views"] = tuple(cfg_raw["views"])
    cfg_raw["channels"] = tuple(cfg_raw["channels"])
    cfg = SvrConfig(**cfg_raw)
    encoders = {}
    for view in meta["views"]:
        enc = ImageEncoder(meta["code_dim"], cfg.channels)
        state = {
            k[len(view) + 1 :]: torch.from_numpy(v.copy())
            for k, v in tensors.items()
            if k.startswith(view + ".")
        }
        enc.load_state_dict(state)
        encoders[view] = enc
    return encoders, cfg, meta
