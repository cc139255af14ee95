"""Vectorized NumPy implementations of the hot kernels.

These mirror the compiled module ``liftseg._kernels._native`` operation
for operation; the solver and network code call whichever backend was
selected at import time. Element-wise formulas are kept identical across
the two backends so results agree to rounding error.
"""
import numpy as np


def capped_simplex_project(v):
    """Project each row of v (N, K) onto {w >= 0, sum(w) <= 1}.

    Clamping negatives suffices when the clamped sum is at most 1;
    otherwise the projection lies on the face sum(w) = 1 and equals the
    sort-and-threshold projection of the original row onto the standard
    simplex.
    """
    v = np.asarray(v, dtype=np.float64)
    n, k = v.shape
    out = np.maximum(v, 0.0)
    over = out.sum(axis=1) > 1.0
    if np.any(over):
        vv = v[over]
        z = -np.sort(-vv, axis=1)  # descending
        cs = np.cumsum(z, axis=1)
        idx = np.arange(1, k + 1, dtype=np.float64)
        positive = z - (cs - 1.0) / idx > 0.0
        rho = k - 1 - np.argmax(positive[:, ::-1], axis=1)  # last True index
        theta = (cs[np.arange(vv.shape[0]), rho] - 1.0) / (rho + 1.0)
        out[over] = np.maximum(vv - theta[:, None], 0.0)
    return out


def pd_iterate(u, ubar, p, rho, lam, tau, sigma, theta):
    """One primal-dual iteration, updating u, ubar, and p in place.

    Dual ascent on p from the gradient of ubar with projection onto the
    radius-lam ball, then primal descent on u against the divergence and
    the data residuals rho, joint per-pixel projection onto the capped
    simplex, and extrapolation into ubar.

    Returns (delta_sq, unorm_sq): squared L2 change of u and squared L2
    norm of the previous iterate, for the caller's stopping rule.
    """
    kc, h, w = u.shape
    gx = np.zeros((kc, h, w))
    gy = np.zeros((kc, h, w))
    gx[:, :, :-1] = ubar[:, :, 1:] - ubar[:, :, :-1]
    gy[:, :-1, :] = ubar[:, 1:, :] - ubar[:, :-1, :]
    px = p[:, 0] + sigma * gx
    py = p[:, 1] + sigma * gy
    nrm = np.sqrt(px * px + py * py)
    scale = np.maximum(1.0, nrm / lam)
    px /= scale
    py /= scale
    p[:, 0] = px
    p[:, 1] = py

    div = np.zeros((kc, h, w))
    div[:, :, :-1] += px[:, :, :-1]
    div[:, :, 1:] -= px[:, :, :-1]
    div[:, :-1, :] += py[:, :-1, :]
    div[:, 1:, :] -= py[:, :-1, :]

    v = u + tau * (div - rho)
    flat = np.ascontiguousarray(v.transpose(1, 2, 0).reshape(h * w, kc))
    proj = capped_simplex_project(flat)
    unew = proj.reshape(h, w, kc).transpose(2, 0, 1)

    diff = unew - u
    delta_sq = float(np.sum(diff * diff))
    unorm_sq = float(np.sum(u * u))
    ubar[...] = unew + theta * diff
    u[...] = unew
    return delta_sq, unorm_sq


def _im2col3(x):
    """Unfold (C, H, W) into (C*9, H*W) columns for a 3x3 zero-padded conv."""
    c, h, w = x.shape
    xp = np.zeros((c, h + 2, w + 2), dtype=np.float64)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((c, 9, h, w), dtype=np.float64)
    t = 0
    for di in range(3):
        for dj in range(3):
            cols[:, t] = xp[:, di:di + h, dj:dj + w]
            t += 1
    return cols.reshape(c * 9, h * w)


def conv3x3_forward(x, w, b):
    """3x3 convolution with zero padding 1: (Cin, H, W) -> (Cout, H, W)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    cout = w.shape[0]
    c, h, wd = x.shape
    cols = _im2col3(x)
    y = w.reshape(cout, c * 9) @ cols
    y += np.asarray(b, dtype=np.float64)[:, None]
    return y.reshape(cout, h, wd)


def conv3x3_grad_input(gy, w):
    """Gradient of conv3x3_forward w.r.t. its input."""
    wt = np.ascontiguousarray(np.asarray(w).transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return conv3x3_forward(gy, wt, np.zeros(wt.shape[0]))


def conv3x3_grad_weights(x, gy):
    """Gradient of conv3x3_forward w.r.t. the weight tensor."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cout = gy.shape[0]
    c = x.shape[0]
    cols = _im2col3(x)
    g = gy.reshape(cout, -1) @ cols.T
    return g.reshape(cout, c, 3, 3)
