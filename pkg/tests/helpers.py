"""Shared test utilities: tiny configs and finite-difference gradients."""

import numpy as np
import torch

from fieldtree.network import HierarchyNet, NetworkConfig


def tiny_config(levels=2, head="gaussian", seed=0, flat_branches=None):
    """The small-probe network: code 8, hidden 16, 16^3 encoder input."""
    return NetworkConfig(
        levels=levels,
        grid_dim=16,
        code_dim=8,
        encoder_channels=(4, 8),
        fd_hidden=16,
        pd_hidden=(16, 16),
        head_kind=head,
        flat_branches=flat_branches,
        seed=seed,
    )


def tiny_net(**kw) -> HierarchyNet:
    return HierarchyNet(tiny_config(**kw)).double()


def fd_gradient(loss_fn, param: torch.Tensor, indices=None, h: float = 1e-5):
    """Central finite differences of loss_fn() w.r.t. selected flat indices."""
    flat = param.data.view(-1)
    if indices is None:
        indices = range(flat.numel())
    grads = {}
    for k in indices:
        old = flat[k].item()
        flat[k] = old + h
        fp = float(loss_fn().detach())
        flat[k] = old - h
        fm = float(loss_fn().detach())
        flat[k] = old
        grads[int(k)] = (fp - fm) / (2.0 * h)
    return grads


def max_rel_error(analytic: dict, numeric: dict, floor: float = 1e-4) -> float:
    """max |a - f| / max(|a|, |f|, floor) over matching entries.

    The floor keeps the ratio meaningful where the true gradient is ~0 and
    central differences only deliver ~1e-9 absolute accuracy; below the floor
    the check still demands 1e-8 absolute agreement at the 1e-4 target.
    """
    worst = 0.0
    for k, f in numeric.items():
        a = analytic[k]
        worst = max(worst, abs(a - f) / max(abs(a), abs(f), floor))
    return worst


def check_gradients(loss_fn, params, rng: np.random.Generator, coords_per_tensor=None):
    """Compare autograd against central differences; returns the worst rel error.

    coords_per_tensor=None checks every coordinate (slow, acceptance-grade);
    an integer subsamples that many coordinates per parameter tensor.
    """
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    analytic = [
        torch.zeros_like(p) if a is None else a for p, a in zip(params, analytic)
    ]
    worst = 0.0
    for p, a in zip(params, analytic):
        n = p.numel()
        if coords_per_tensor is None or coords_per_tensor >= n:
            idx = range(n)
        else:
            idx = rng.choice(n, size=coords_per_tensor, replace=False)
        numeric = fd_gradient(loss_fn, p, indices=idx)
        aflat = a.reshape(-1)
        worst = max(
            worst,
            max_rel_error({int(k): float(aflat[k]) for k in numeric}, numeric),
        )
    return worst
