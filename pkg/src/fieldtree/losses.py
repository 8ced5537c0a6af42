"""Per-level reconstruction loss, parent-child decomposition loss, weighted total.

All losses are batch means (not sums), so magnitudes do not depend on the
number of points per iteration; the optimum is unchanged. The max over sibling
fields is kept non-smooth; at ties the subgradient follows the lower-index
branch (torch.max semantics).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .network import FieldTree


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 10.0
    decomposition_enabled: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class LossReport:
    recon_per_level: list  # N floats
    decomposition_total: float
    total: float


def recon_level(tree: FieldTree, level: int, y_gt: torch.Tensor) -> torch.Tensor:
    """Mean of (y - max_i f_{i,level}(p))^2 over the point batch."""
    fields = tree.fields(level)
    if fields.shape[1] != y_gt.shape[0]:
        raise ValueError(
            f"batch mismatch: {fields.shape[1]} field columns, {y_gt.shape[0]} targets"
        )
    union = fields.max(dim=0).values
    return ((y_gt - union) ** 2).mean()


def recon_total(tree: FieldTree, y_gt: torch.Tensor, max_level: int = None) -> torch.Tensor:
    """Sum of per-level reconstruction losses over levels 1..max_level."""
    n = tree.n_levels if max_level is None else max_level
    out = tree.levels[0].new_zeros(())
    for j in range(1, n + 1):
        out = out + recon_level(tree, j, y_gt)
    return out


def decomposition_node(tree: FieldTree, i: int, j: int) -> torch.Tensor:
    """Mean of (f_{i,j} - max(f_{2i-1,j+1}, f_{2i,j+1}))^2; 1-based node ids."""
    if tree.flat:
        raise ValueError("flat trees have no parent-child structure")
    if not 1 <= j <= tree.n_levels - 1:
        raise ValueError(f"internal level {j} out of range 1..{tree.n_levels - 1}")
    parent = tree.fields(j)[i - 1]
    child = tree.fields(j + 1)
    pair = torch.maximum(child[2 * i - 2], child[2 * i - 1])
    return ((parent - pair) ** 2).mean()


def decomposition_level(tree: FieldTree, j: int) -> torch.Tensor:
    """Sum of node losses over all 2^j nodes at level j."""
    parent = tree.fields(j)
    child = tree.fields(j + 1)
    pair = torch.maximum(child[0::2], child[1::2])
    return ((parent - pair) ** 2).mean(dim=1).sum()


def decomposition_total(tree: FieldTree, max_level: int = None) -> torch.Tensor:
    """Sum over internal levels 1..min(N, max_level)-1; zero for N = 1 trees."""
    n = tree.n_levels if max_level is None else max_level
    out = tree.levels[0].new_zeros(())
    if tree.flat:
        return out
    for j in range(1, n):
        out = out + decomposition_level(tree, j)
    return out


def stage_objective(
    tree: FieldTree,
    y_gt: torch.Tensor,
    weights: LossWeights,
    max_level: int = None,
    decomposition: bool = True,
) -> torch.Tensor:
    """alpha * recon(1..j) + beta * deco(1..j-1); deco dropped when disabled.

    `decomposition=False` selects the fine-tune objective (reconstruction only).
    """
    out = weights.alpha * recon_total(tree, y_gt, max_level)
    if decomposition and weights.decomposition_enabled and weights.beta > 0:
        out = out + weights.beta * decomposition_total(tree, max_level)
    return out


def total_loss(tree: FieldTree, y_gt: torch.Tensor, weights: LossWeights) -> LossReport:
    """Full weighted loss over every level, reported per component."""
    recon = [
        float(recon_level(tree, j, y_gt).detach()) for j in range(1, tree.n_levels + 1)
    ]
    deco = float(decomposition_total(tree).detach())
    total = weights.alpha * sum(recon)
    if weights.decomposition_enabled:
        total += weights.beta * deco
    return LossReport(recon_per_level=recon, decomposition_total=deco, total=total)
