"""liftseg: unsupervised multiphase image segmentation.

A single grayscale image is lifted into K feature channels (Gabor filter
bank or a per-image-trained convolutional decomposition) and partitioned
into K+1 regions by minimizing a multichannel piecewise-constant
segmentation energy with total-variation regularization via a first-order
primal-dual scheme.
"""

__version__ = "0.1.0"

from liftseg.errors import LiftsegError, NumericalError, ValidationError
from liftseg.model import (
    RegionConstants,
    SolverConfig,
    normalize_features,
    validate_soft_labels,
)
from liftseg.gabor import GaborParam, GaborSpec, default_texture_bank, lift_gabor
from liftseg.cnn import CnnConfig, NetworkParams, train_decomposition
from liftseg.energy import EnergyBreakdown, energy
from liftseg.solver import SolverTrace, primal_dual_segment
from liftseg.metrics import EvaluationReport, evaluate, extract_labels, render_overlay

__all__ = [
    "LiftsegError",
    "ValidationError",
    "NumericalError",
    "RegionConstants",
    "SolverConfig",
    "normalize_features",
    "validate_soft_labels",
    "GaborParam",
    "GaborSpec",
    "default_texture_bank",
    "lift_gabor",
    "CnnConfig",
    "NetworkParams",
    "train_decomposition",
    "EnergyBreakdown",
    "energy",
    "SolverTrace",
    "primal_dual_segment",
    "EvaluationReport",
    "evaluate",
    "extract_labels",
    "render_overlay",
]
