"""Shared domain types, feature normalization, and validation.

Array conventions used throughout the package (all float64, C-contiguous):

* image          -- (H, W), intensities in [0, 1]
* feature stack  -- (K, H, W), one lifted channel per leading index
* soft labels    -- (K, H, W), pointwise nonnegative, channel sum <= 1
* dual field     -- (K, 2, H, W), per-channel (x, y) vector field
* label map      -- (H, W) integers in {0, .., K}; 0 is the residual class
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from liftseg.errors import ValidationError

MIN_SIDE = 3  # forward differences need at least two interior steps


def as_image(data):
    """Coerce to a validated (H, W) float64 image array."""
    arr = np.asarray(data, dtype=np.float64)
    validate_image(arr)
    return arr


def validate_image(f):
    """Check image shape and finiteness; raise ValidationError on failure."""
    f = np.asarray(f)
    if f.ndim != 2:
        raise ValidationError(f"image must be 2-D, got shape {f.shape}")
    if f.shape[0] < MIN_SIDE or f.shape[1] < MIN_SIDE:
        raise ValidationError(
            f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {f.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise ValidationError("image contains non-finite values")


def validate_feature_stack(phi):
    """Check a (K, H, W) feature stack: K >= 1, consistent sizes, finite."""
    phi = np.asarray(phi)
    if phi.ndim != 3 or phi.shape[0] < 1:
        raise ValidationError(
            f"feature stack must be (K, H, W) with K >= 1, got shape {phi.shape}"
        )
    if phi.shape[1] < MIN_SIDE or phi.shape[2] < MIN_SIDE:
        raise ValidationError(
            f"feature channels must be at least {MIN_SIDE}x{MIN_SIDE}, got {phi.shape[1:]}"
        )
    if not np.all(np.isfinite(phi)):
        raise ValidationError("feature stack contains non-finite values")


def normalize_features(stack):
    """Rescale every channel affinely onto [0, 1].

    A channel whose range is zero up to rounding noise carries no
    contrast; it is mapped to all zeros and a warning is emitted rather
    than aborting the pipeline (rescaling would amplify pure noise).
    """
    stack = np.asarray(stack, dtype=np.float64)
    validate_feature_stack(stack)
    out = np.empty_like(stack)
    for k in range(stack.shape[0]):
        lo = stack[k].min()
        hi = stack[k].max()
        if hi - lo > 1e-12 * max(1.0, abs(hi), abs(lo)):
            out[k] = (stack[k] - lo) / (hi - lo)
        else:
            warnings.warn(f"feature channel {k} is constant; normalized to zeros")
            out[k] = 0.0
    return out


def validate_soft_labels(u, tol=1e-9):
    """True iff every pixel satisfies u_k >= -tol and sum_k u_k <= 1 + tol."""
    u = np.asarray(u)
    if u.ndim != 3:
        return False
    if not np.all(np.isfinite(u)):
        return False
    if u.min() < -tol:
        return False
    return bool(u.sum(axis=0).max() <= 1.0 + tol)


@dataclass(frozen=True)
class RegionConstants:
    """Per-channel inside/outside means of the feature maps.

    ``inside[k]`` is the weighted mean of channel k over its soft label,
    ``outside[k]`` the weighted mean over the complement.
    """

    inside: np.ndarray
    outside: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.inside, dtype=np.float64)
        b = np.asarray(self.outside, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValidationError("region constants must be two equal-length vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("region constants must be finite")
        object.__setattr__(self, "inside", a)
        object.__setattr__(self, "outside", b)


_DEFAULT_STEP = 1.0 / math.sqrt(8.0)  # tau*sigma*8 <= 1 for the 2-D gradient


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the primal-dual segmentation solver.

    lam is the total-variation weight; tau/sigma are the primal/dual step
    sizes and must satisfy tau*sigma*8 <= 1 (squared operator norm of the
    discrete gradient in 2-D); theta is the extrapolation weight.
    """

    lam: float = 0.2
    max_iter: int = 3000
    tol: float = 1e-5
    tau: float = _DEFAULT_STEP
    sigma: float = _DEFAULT_STEP
    theta: float = 1.0
    constant_update_period: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("lam must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0")
        if not (self.tau > 0 and self.sigma > 0):
            raise ValidationError("step sizes must be positive")
        if self.tau * self.sigma * 8.0 > 1.0 + 1e-12:
            raise ValidationError(
                f"tau*sigma*8 = {self.tau * self.sigma * 8.0:.6g} exceeds 1"
            )
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError("theta must lie in [0, 1]")
        if self.constant_update_period < 1:
            raise ValidationError("constant_update_period must be >= 1")

    @classmethod
    def from_dict(cls, d):
        """Build from a JSON-style mapping; accepts "lambda" for lam."""
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {
            "lam", "max_iter", "tol", "tau", "sigma", "theta",
            "constant_update_period",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {
            "lambda": self.lam,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "tau": self.tau,
            "sigma": self.sigma,
            "theta": self.theta,
            "constant_update_period": self.constant_update_period,
        }
