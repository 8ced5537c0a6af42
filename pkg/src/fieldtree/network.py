"""Encoder, feature decoders, part decoders, and the recursive forward pass.

A trained model holds one 3D conv encoder, N part decoders, and N-1 feature
decoders. Nodes use 1-based ids (i, j): node (i, j) at level j has children
(2i-1, j+1) and (2i, j+1). All nodes of one level share that level's decoder
parameters; different levels use different parameters. In-memory arrays are
0-based: branch b at level j corresponds to node i = b + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

EPS_S = 0.01       # lower bound of the Gaussian scale, keeps gradients alive at s -> 0
EPS_R = 1e-3       # lower bound of every radius, precludes division by zero
INIT_RADIUS = 0.25 # target initial radius so fresh branches cover a useful region
LEAKY_SLOPE = 0.02

# softplus(raw) = INIT_RADIUS - EPS_R at this bias value
_RAW_R_BIAS = math.log(math.expm1(INIT_RADIUS - EPS_R))

HEAD_KINDS = ("gaussian", "sphere", "point")
_PARAMS_PER_BRANCH = {"gaussian": 7, "sphere": 5, "point": 1}


@dataclass
class NetworkConfig:
    levels: int = 2
    grid_dim: int = 32
    code_dim: int = 128
    encoder_channels: tuple = (32, 64, 128, 256)
    fd_hidden: int = 256
    pd_hidden: tuple = (256, 256)
    head_kind: str = "gaussian"
    flat_branches: Optional[int] = None  # set to k for the no-hierarchy ablation
    inside_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}")
        if self.flat_branches is not None and self.flat_branches < 2:
            raise ValueError("flat_branches must be >= 2")
        d = self.grid_dim
        if d < 16 or d & (d - 1):
            raise ValueError("grid_dim must be a power of two >= 16")
        n_strided = int(math.log2(d)) - 2
        if len(self.encoder_channels) < n_strided:
            raise ValueError(
                f"encoder_channels needs >= {n_strided} entries for grid_dim {d}"
            )

    @property
    def flat(self) -> bool:
        return self.flat_branches is not None

    @property
    def branches_at_leaf(self) -> int:
        return self.flat_branches if self.flat else 2**self.levels


@dataclass
class GaussianParams:
    """One scaled anisotropic Gaussian per (branch, point): 7 values total.

    s in (EPS_S, 1], c unconstrained, every radius >= EPS_R. The sphere head
    uses the same container with a single shared radius (last dim 1).
    """

    s: torch.Tensor  # (..., )
    c: torch.Tensor  # (..., 3)
    r: torch.Tensor  # (..., 3) gaussian, (..., 1) sphere


@dataclass
class FieldTree:
    """Per-node field values for a point batch, plus the node feature codes.

    levels[j-1] has shape (2^j, B) in hierarchical mode (one row per node at
    level j); flat mode has a single (k, B) level. codes[j] holds the level-j
    feature codes, codes[0] being the root code from the encoder.
    """

    levels: list
    codes: list = field(default_factory=list)
    flat: bool = False

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def fields(self, level: int) -> torch.Tensor:
        if not 1 <= level <= self.n_levels:
            raise ValueError(f"level {level} out of range 1..{self.n_levels}")
        return self.levels[level - 1]


def gaussian_field(params: GaussianParams, points: torch.Tensor) -> torch.Tensor:
    """f = s * exp(sum_d -(c_d - p_d)^2 / (2 r_d^2)); a sphere-head radius of
    shape (..., 1) broadcasts over the three axes."""
    d2 = (params.c - points) ** 2
    expo = (-d2 / (2.0 * params.r**2)).sum(-1)
    return params.s * torch.exp(expo)


def head_eval(theta, points, kind: str) -> torch.Tensor:
    """Occupancy probability of `points` under one branch head.

    theta is a GaussianParams for gaussian/sphere heads and the raw
    pre-sigmoid tensor for the point head.
    """
    if kind in ("gaussian", "sphere"):
        return gaussian_field(theta, points)
    if kind == "point":
        return torch.sigmoid(theta)
    raise ValueError(f"unknown head kind {kind!r}")


class VoxelEncoder(nn.Module):
    """Strided 3D convolutions to 4^3, a valid 4^3 conv to 1, sigmoid code."""

    def __init__(self, grid_dim: int, channels: tuple, code_dim: int):
        super().__init__()
        self.grid_dim = grid_dim
        n_strided = int(math.log2(grid_dim)) - 2
        convs = []
        c_in = 1
        for c_out in channels[:n_strided]:
            convs.append(nn.Conv3d(c_in, c_out, 4, stride=2, padding=1))
            c_in = c_out
        convs.append(nn.Conv3d(c_in, code_dim, 4, stride=1, padding=0))
        self.convs = nn.ModuleList(convs)

    def forward(self, vox: torch.Tensor) -> torch.Tensor:
        if vox.shape != (self.grid_dim,) * 3:
            raise ValueError(
                f"voxel grid shape {tuple(vox.shape)} != configured "
                f"{(self.grid_dim,) * 3}"
            )
        h = vox[None, None]
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        h = torch.sigmoid(self.convs[-1](h))
        return h.reshape(-1)


class FeatureDecoder(nn.Module):
    """Splits one parent code into two child codes, each in (0, 1)."""

    def __init__(self, code_dim: int, hidden: int):
        super().__init__()
        self.code_dim = code_dim
        self.fc1 = nn.Linear(code_dim, hidden)
        self.fc2 = nn.Linear(hidden, 2 * code_dim)

    def forward(self, codes: torch.Tensor):
        h = F.leaky_relu(self.fc1(codes), LEAKY_SLOPE)
        out = torch.sigmoid(self.fc2(h))
        return out[..., : self.code_dim], out[..., self.code_dim :]


class PartDecoder(nn.Module):
    """3-layer MLP from (code, point) to per-branch head parameters.

    The last layer's output is split into `branches` heads. Gaussian heads map
    raw values through s = EPS_S + (1 - EPS_S)*sigmoid(raw_s), c = raw_c,
    r = EPS_R + softplus(raw_r), so s lands in (EPS_S, 1] smoothly and radii
    stay strictly positive.
    """

    def __init__(self, code_dim: int, hidden: tuple, head_kind: str, branches: int = 2):
        super().__init__()
        self.head_kind = head_kind
        self.branches = branches
        self.psize = _PARAMS_PER_BRANCH[head_kind]
        self.fc1 = nn.Linear(code_dim + 3, hidden[0])
        self.fc2 = nn.Linear(hidden[0], hidden[1])
        self.fc3 = nn.Linear(hidden[1], branches * self.psize)

    def raw(self, codes: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
        """(P, C) codes x (B, 3) points -> (P, branches, B, psize) raw outputs."""
        P = codes.shape[0]
        B = points.shape[0]
        x = torch.cat(
            [
                codes[:, None, :].expand(P, B, codes.shape[-1]),
                points[None, :, :].expand(P, B, 3),
            ],
            dim=-1,
        )
        h = F.leaky_relu(self.fc1(x), LEAKY_SLOPE)
        h = F.leaky_relu(self.fc2(h), LEAKY_SLOPE)
        out = self.fc3(h)  # (P, B, branches * psize)
        return out.reshape(P, B, self.branches, self.psize).permute(0, 2, 1, 3)

    def params(self, codes: torch.Tensor, points: torch.Tensor):
        """Per-point head parameters; GaussianParams for gaussian/sphere heads,
        the raw logit tensor for the point head. Leading dims (P, branches, B)."""
        raw = self.raw(codes, points)
        if self.head_kind == "point":
            return raw[..., 0]
        s = EPS_S + (1.0 - EPS_S) * torch.sigmoid(raw[..., 0])
        c = raw[..., 1:4]
        r = EPS_R + F.softplus(raw[..., 4:])
        return GaussianParams(s=s, c=c, r=r)

    def forward(self, codes: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
        """Field values, flattened over parents and branches: (P*branches, B).

        Branch order within a parent is (left, right), so parent row k expands
        to rows 2k and 2k+1 (the paper-style (2i-1, 2i) rule, 0-based).
        """
        theta = self.params(codes, points)
        if self.head_kind == "point":
            f = torch.sigmoid(theta)
        else:
            f = gaussian_field(theta, points[None, None, :, :])
        P, nb, B = f.shape
        return f.reshape(P * nb, B)


class HierarchyNet(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        cd = config.code_dim
        self.encoder = VoxelEncoder(config.grid_dim, config.encoder_channels, cd)
        if config.flat:
            self.part_decoders = nn.ModuleList(
                [PartDecoder(cd, config.pd_hidden, config.head_kind,
                             config.flat_branches)]
            )
            self.feature_decoders = nn.ModuleList([])
        else:
            self.part_decoders = nn.ModuleList(
                [
                    PartDecoder(cd, config.pd_hidden, config.head_kind, 2)
                    for _ in range(config.levels)
                ]
            )
            self.feature_decoders = nn.ModuleList(
                [
                    FeatureDecoder(cd, config.fd_hidden)
                    for _ in range(config.levels - 1)
                ]
            )
        self._init_params(config.seed)

    def _init_params(self, seed: int) -> None:
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for p in self.parameters():
                if p.ndim > 1:
                    p.normal_(0.0, 0.02, generator=g)
                else:
                    p.zero_()
            if self.config.head_kind in ("gaussian", "sphere"):
                for pd in self.part_decoders:
                    bias = pd.fc3.bias.reshape(pd.branches, pd.psize)
                    bias[:, 4:] = _RAW_R_BIAS

    # -- parameter bookkeeping -------------------------------------------------

    def parameter_groups(self) -> dict:
        groups = {"encoder": self.encoder}
        for j, pd in enumerate(self.part_decoders, start=1):
            groups[f"part_decoder_{j}"] = pd
        for j, fd in enumerate(self.feature_decoders, start=1):
            groups[f"feature_decoder_{j}"] = fd
        return groups

    # -- forward pieces ----------------------------------------------------------

    def encode(self, vox: torch.Tensor) -> torch.Tensor:
        """Voxel grid (D, D, D) -> root feature code (code_dim,), entries in (0, 1)."""
        return self.encoder(vox)

    def decode_features(self, codes: torch.Tensor, level: int):
        """Level-j feature decoder: parent codes -> (left, right) child codes."""
        n_fd = len(self.feature_decoders)
        if not 1 <= level <= n_fd:
            raise ValueError(f"feature decoder level {level} out of range 1..{n_fd}")
        return self.feature_decoders[level - 1](codes)

    def part_decode(self, codes: torch.Tensor, points: torch.Tensor, level: int):
        """Level-j part decoder parameters, (P, branches, B) leading dims."""
        n_pd = len(self.part_decoders)
        if not 1 <= level <= n_pd:
            raise ValueError(f"part decoder level {level} out of range 1..{n_pd}")
        return self.part_decoders[level - 1].params(codes.reshape(-1, self.config.code_dim), points)

    def forward_from_code(
        self, root_code: torch.Tensor, points: torch.Tensor, max_level: Optional[int] = None
    ) -> FieldTree:
        """Decode the tree below a given root code (shared by the image path)."""
        cfg = self.config
        if cfg.flat:
            fields = self.part_decoders[0](root_code.reshape(1, -1), points)
            return FieldTree(levels=[fields], codes=[root_code.reshape(1, -1)], flat=True)
        n = cfg.levels if max_level is None else min(max_level, cfg.levels)
        codes = [root_code.reshape(1, -1)]
        levels = []
        for j in range(1, n + 1):
            parent = codes[j - 1]
            levels.append(self.part_decoders[j - 1](parent, points))
            if j < n:
                left, right = self.feature_decoders[j - 1](parent)
                # children of parent row k land at rows 2k, 2k+1
                stacked = torch.stack([left, right], dim=1)
                codes.append(stacked.reshape(-1, cfg.code_dim))
        return FieldTree(levels=levels, codes=codes, flat=False)

    def forward_hierarchy(
        self, vox: torch.Tensor, points: torch.Tensor, max_level: Optional[int] = None
    ) -> FieldTree:
        """Full forward pass: encode the grid, then decode fields level by level."""
        return self.forward_from_code(self.encode(vox), points, max_level=max_level)

    def leaf_level(self) -> int:
        return 1 if self.config.flat else self.config.levels


def classify_points(
    tree: FieldTree, level: int, tau: float
) -> np.ndarray:
    """Per-point branch assignment at one level.

    Returns 0-based branch indices (node i = index + 1); -1 marks points whose
    maximum field value is <= tau (outside every part). Ties go to the lowest
    branch index.
    """
    fields = tree.fields(level).detach().cpu().numpy()
    best = np.argmax(fields, axis=0)
    best_val = fields[best, np.arange(fields.shape[1])]
    out = best.astype(np.int64)
    out[best_val <= tau] = -1
    return out


def child_nodes(i: int, j: int) -> tuple:
    """Children of 1-based node (i, j): ((2i-1, j+1), (2i, j+1))."""
    return (2 * i - 1, j + 1), (2 * i, j + 1)
