"""fieldtree: hierarchical implicit-field shape decomposition at desk scale.

A binary tree of implicit parts reconstructs a voxelized shape at every tree
level without part supervision; each branch predicts a fresh scaled
anisotropic Gaussian per query point. The package bundles the toy data
pipeline, training schedule, surface extraction, the evaluation protocol, and
single-view reconstruction behind one CLI (`fieldtree`).
"""

__version__ = "0.1.0"

from .losses import LossReport, LossWeights
from .network import FieldTree, GaussianParams, HierarchyNet, NetworkConfig
from .training import TrainConfig, build_stage_plan, train

__all__ = [
    "FieldTree",
    "GaussianParams",
    "HierarchyNet",
    "LossReport",
    "LossWeights",
    "NetworkConfig",
    "TrainConfig",
    "build_stage_plan",
    "train",
]
