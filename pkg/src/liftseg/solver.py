"""Primal-dual minimization of the segmentation energy.

The scheme alternates, per iteration: closed-form refresh of the region
constants (every ``constant_update_period`` steps), dual ascent on the TV
variables with projection onto the radius-lam ball, primal descent on the
soft labels against the data residuals with a joint per-pixel projection
onto the capped simplex {u >= 0, sum u <= 1}, and over-relaxation of the
primal iterate. The data term is linear in u between constant updates, so
the primal step is an exact proximal (projection) step.

The per-iteration work runs in the selected kernel backend (compiled
extension when built, vectorized NumPy otherwise).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from liftseg import _kernels as kernels
from liftseg.energy import energy, optimal_constants
from liftseg.errors import NumericalError, ValidationError
from liftseg.model import SolverConfig, validate_feature_stack, validate_soft_labels

FEATURE_RANGE_TOL = 1e-9

# The tolerance is honored only after this many iterations: when the
# initial point sits on active constraints the primal can be pinned for a
# few steps while the dual variable accumulates, yielding a spurious zero
# relative change (visible with very large lam on piecewise-constant
# features).
MIN_ITERATIONS = 10


def project_admissible_pixel(v):
    """Euclidean projection of one length-K vector onto {w >= 0, sum w <= 1}."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("projection input must be finite")
    return kernels.capped_simplex_project(v.reshape(1, -1))[0]


def project_dual_pixel(p, lam):
    """Radial projection of a 2-vector onto the closed ball of radius lam."""
    if not lam > 0:
        raise ValidationError("lam must be > 0")
    p = np.asarray(p, dtype=np.float64)
    nrm = float(np.sqrt(p[0] * p[0] + p[1] * p[1]))
    return p / max(1.0, nrm / lam)


def residual_weights(constants, phi):
    """Per-channel data residuals rho_k = (a_k - phi_k)^2 - (b_k - phi_k)^2.

    Negative where the feature is closer to the inside constant (pushes
    u_k up in the primal descent), positive where the outside fits better.
    """
    phi = np.asarray(phi, dtype=np.float64)
    a = constants.inside[:, None, None]
    b = constants.outside[:, None, None]
    da = a - phi
    db = b - phi
    return np.ascontiguousarray(da * da - db * db)


def feature_init(phi):
    """Feature-proportional admissible initialization u_k = phi_k / max(1, sum phi)."""
    phi = np.asarray(phi, dtype=np.float64)
    denom = np.maximum(1.0, phi.sum(axis=0))
    return phi / denom[None, :, :]


@dataclass
class SolverTrace:
    """Progress record: energy at each constant update, per-iteration
    relative primal change, and the stopping outcome."""

    energies: list
    primal_changes: list
    iterations_run: int
    converged: bool

    def to_dict(self):
        return {
            "energies": self.energies,
            "primal_changes": self.primal_changes,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
        }


def primal_dual_segment(phi, config=None, u0=None):
    """Minimize the segmentation energy over the admissible set.

    Parameters
    ----------
    phi : (K, H, W) array
        Feature stack, each channel normalized to [0, 1].
    config : SolverConfig, optional
        Defaults to SolverConfig().
    u0 : (K, H, W) array, optional
        Admissible starting point; defaults to the feature-proportional
        initialization, which breaks the symmetry of the non-convex
        problem toward the features.

    Returns
    -------
    (u, constants, trace)
        Final soft labels, region constants recomputed for them, and the
        SolverTrace. Stops when the relative L2 change of u drops below
        config.tol or after config.max_iter iterations.
    """
    if config is None:
        config = SolverConfig()
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    validate_feature_stack(phi)
    if phi.min() < -FEATURE_RANGE_TOL or phi.max() > 1.0 + FEATURE_RANGE_TOL:
        raise ValidationError(
            "features must be normalized to [0, 1]; run normalize_features first"
        )

    if u0 is None:
        u = feature_init(phi)
    else:
        u = np.array(u0, dtype=np.float64)
        if u.shape != phi.shape:
            raise ValidationError(
                f"u0 shape {u.shape} does not match features {phi.shape}"
            )
        if not validate_soft_labels(u):
            raise ValidationError("u0 is not admissible")
    u = np.ascontiguousarray(u)
    ubar = u.copy()
    kc, h, w = phi.shape
    p = np.zeros((kc, 2, h, w))

    energies = []
    primal_changes = []
    rho = None
    converged = False
    iterations_run = 0

    for n in range(config.max_iter):
        if n % config.constant_update_period == 0:
            constants = optimal_constants(u, phi)
            rho = residual_weights(constants, phi)
            energies.append(energy(u, phi, config.lam).total)
        delta_sq, unorm_sq = kernels.pd_iterate(
            u, ubar, p, rho,
            config.lam, config.tau, config.sigma, config.theta,
        )
        if not (np.isfinite(delta_sq) and np.isfinite(unorm_sq)):
            raise NumericalError(f"non-finite iterate at iteration {n}")
        rel = float(np.sqrt(delta_sq) / max(1e-12, np.sqrt(unorm_sq)))
        primal_changes.append(rel)
        iterations_run = n + 1
        if rel < config.tol and iterations_run >= min(MIN_ITERATIONS, config.max_iter):
            converged = True
            break

    trace = SolverTrace(
        energies=energies,
        primal_changes=primal_changes,
        iterations_run=iterations_run,
        converged=converged,
    )
    return u, optimal_constants(u, phi), trace
