"""Discrete segmentation energy: data fidelity, TV regularizer, constants.

The discretization uses forward differences with Neumann boundary (last
row/column gradient components are zero) and isotropic per-pixel gradient
norms; the matching divergence is the exact negative adjoint so that
<grad u, p> == -<u, div p> holds for all u, p. Integrals are plain pixel
sums (unit pixel area).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from liftseg.errors import ValidationError
from liftseg.model import RegionConstants, validate_soft_labels

ADMISSIBLE_TOL = 1e-9


def discrete_gradient(field):
    """Forward-difference gradient of an (H, W) field, shape (2, H, W).

    Component 0 differences along columns (x), component 1 along rows (y);
    the last column/row of the respective component is zero.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    g = np.zeros((2, h, w))
    g[0, :, :-1] = field[:, 1:] - field[:, :-1]
    g[1, :-1, :] = field[1:, :] - field[:-1, :]
    return g


def divergence(p):
    """Negative adjoint of discrete_gradient for a (2, H, W) vector field.

    The structurally-zero gradient slots (last column of the x component,
    last row of the y component) are ignored, which makes the adjoint
    identity exact for arbitrary p.
    """
    p = np.asarray(p, dtype=np.float64)
    _, h, w = p.shape
    out = np.zeros((h, w))
    out[:, :-1] += p[0, :, :-1]
    out[:, 1:] -= p[0, :, :-1]
    out[:-1, :] += p[1, :-1, :]
    out[1:, :] -= p[1, :-1, :]
    return out


def total_variation(field):
    """Isotropic discrete TV: sum over pixels of |grad|_2."""
    g = discrete_gradient(field)
    return float(np.sum(np.sqrt(g[0] * g[0] + g[1] * g[1])))


def optimal_constants(u, phi):
    """Closed-form minimizers of the data term for fixed soft labels.

    inside_k is the u_k-weighted mean of phi_k, outside_k the mean over
    the complement weight 1 - u_k; an all-zero weight yields 0 by
    convention so the result is deterministic.
    """
    u = np.asarray(u, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if u.shape != phi.shape:
        raise ValidationError(
            f"label/feature shape mismatch: {u.shape} vs {phi.shape}"
        )
    kc = u.shape[0]
    inside = np.zeros(kc)
    outside = np.zeros(kc)
    for k in range(kc):
        wsum = u[k].sum()
        if wsum > 0.0:
            inside[k] = float((phi[k] * u[k]).sum() / wsum)
        comp = 1.0 - u[k]
        csum = comp.sum()
        if csum > 0.0:
            outside[k] = float((phi[k] * comp).sum() / csum)
    return RegionConstants(inside=inside, outside=outside)


def data_term(u, constants, phi):
    """Fidelity sum_k sum_x (a_k - phi_k)^2 u_k + (b_k - phi_k)^2 (1 - u_k)."""
    u = np.asarray(u, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    a = constants.inside
    b = constants.outside
    total = 0.0
    for k in range(u.shape[0]):
        da = a[k] - phi[k]
        db = b[k] - phi[k]
        total += float(np.sum(da * da * u[k] + db * db * (1.0 - u[k])))
    return total


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy value split into its parts; total is +inf if u is inadmissible."""

    total: float
    data: float
    tv: float
    per_channel_tv: tuple
    constants: RegionConstants

    def to_dict(self):
        return {
            "total": self.total if np.isfinite(self.total) else "inf",
            "data": self.data,
            "tv": self.tv,
            "per_channel_tv": list(self.per_channel_tv),
            "constants": {
                "inside": self.constants.inside.tolist(),
                "outside": self.constants.outside.tolist(),
            },
        }


def energy(u, phi, lam):
    """Total energy lam * sum_k TV(u_k) + data term at the optimal constants."""
    if not lam > 0:
        raise ValidationError("lam must be > 0")
    u = np.asarray(u, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    constants = optimal_constants(u, phi)
    per_tv = tuple(total_variation(u[k]) for k in range(u.shape[0]))
    tv = float(sum(per_tv))
    data = data_term(u, constants, phi)
    total = lam * tv + data
    if not validate_soft_labels(u, ADMISSIBLE_TOL):
        total = float("inf")
    return EnergyBreakdown(
        total=total, data=data, tv=tv, per_channel_tv=per_tv, constants=constants
    )
