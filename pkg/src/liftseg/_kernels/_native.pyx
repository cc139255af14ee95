# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the solver inner loop and the 3x3 convolutions.

Mirrors liftseg._kernels._numpy; the per-element arithmetic uses the same
expressions so the two backends agree to rounding error.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline void _proj_pixel(double* v, double* out, double* z, Py_ssize_t k) noexcept nogil:
    """Project one length-k vector onto {w >= 0, sum(w) <= 1}."""
    cdef Py_ssize_t j, m, rho
    cdef double s = 0.0, x, css, theta
    for j in range(k):
        x = v[j]
        out[j] = x if x > 0.0 else 0.0
        s += out[j]
    if s <= 1.0:
        return
    # insertion sort of v into z, descending
    for j in range(k):
        x = v[j]
        m = j
        while m > 0 and z[m - 1] < x:
            z[m] = z[m - 1]
            m -= 1
        z[m] = x
    css = 0.0
    theta = 0.0
    rho = 0
    for j in range(k):
        css += z[j]
        if z[j] - (css - 1.0) / (j + 1) > 0.0:
            rho = j + 1
            theta = (css - 1.0) / (j + 1)
    for j in range(k):
        x = v[j] - theta
        out[j] = x if x > 0.0 else 0.0


def capped_simplex_project(v):
    """Project each row of v (N, K) onto {w >= 0, sum(w) <= 1}."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] varr = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = varr.shape[0], k = varr.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, k), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] scratch = np.empty(k, dtype=np.float64)
    cdef double* vp = <double*> varr.data
    cdef double* op = <double*> out.data
    cdef double* zp = <double*> scratch.data
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _proj_pixel(vp + i * k, op + i * k, zp, k)
    return out


def pd_iterate(double[:, :, ::1] u, double[:, :, ::1] ubar, double[:, :, :, ::1] p,
               double[:, :, ::1] rho, double lam, double tau, double sigma, double theta):
    """One primal-dual iteration updating u, ubar, p in place.

    Same update rule as the NumPy backend: dual ascent from the gradient
    of ubar with projection onto the radius-lam ball, primal descent
    against divergence and residuals, per-pixel capped-simplex
    projection, then extrapolation. Returns (delta_sq, unorm_sq).
    """
    cdef Py_ssize_t kc = u.shape[0], h = u.shape[1], w = u.shape[2]
    cdef Py_ssize_t k, i, j
    cdef double gx, gy, px, py, nrm, scale, dv, un, wv
    cdef double delta_sq = 0.0, unorm_sq = 0.0
    cdef cnp.ndarray[double, ndim=1, mode="c"] vbuf_arr = np.empty(kc, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] wbuf_arr = np.empty(kc, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] zbuf_arr = np.empty(kc, dtype=np.float64)
    cdef double* vbuf = <double*> vbuf_arr.data
    cdef double* wbuf = <double*> wbuf_arr.data
    cdef double* zbuf = <double*> zbuf_arr.data

    with nogil:
        # dual ascent and projection onto the lam-ball
        for k in range(kc):
            for i in range(h):
                for j in range(w):
                    gx = ubar[k, i, j + 1] - ubar[k, i, j] if j < w - 1 else 0.0
                    gy = ubar[k, i + 1, j] - ubar[k, i, j] if i < h - 1 else 0.0
                    px = p[k, 0, i, j] + sigma * gx
                    py = p[k, 1, i, j] + sigma * gy
                    nrm = sqrt(px * px + py * py)
                    scale = nrm / lam
                    if scale < 1.0:
                        scale = 1.0
                    p[k, 0, i, j] = px / scale
                    p[k, 1, i, j] = py / scale

        # primal descent, joint projection, extrapolation
        for i in range(h):
            for j in range(w):
                for k in range(kc):
                    dv = 0.0
                    if j < w - 1:
                        dv += p[k, 0, i, j]
                    if j > 0:
                        dv -= p[k, 0, i, j - 1]
                    if i < h - 1:
                        dv += p[k, 1, i, j]
                    if i > 0:
                        dv -= p[k, 1, i - 1, j]
                    vbuf[k] = u[k, i, j] + tau * (dv - rho[k, i, j])
                _proj_pixel(vbuf, wbuf, zbuf, kc)
                for k in range(kc):
                    un = u[k, i, j]
                    wv = wbuf[k]
                    delta_sq += (wv - un) * (wv - un)
                    unorm_sq += un * un
                    u[k, i, j] = wv
                    ubar[k, i, j] = wv + theta * (wv - un)
    return delta_sq, unorm_sq


def conv3x3_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    """3x3 convolution with zero padding 1: (Cin, H, W) -> (Cout, H, W)."""
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0]
    out_arr = np.empty((cout, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, i, j, di, dj, ilo, ihi, jlo, jhi
    cdef double wv
    with nogil:
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    out[o, i, j] = b[o]
            for c in range(cin):
                for di in range(3):
                    # needs 0 <= i + di - 1 < h
                    ilo = 1 - di
                    if ilo < 0:
                        ilo = 0
                    ihi = h + 1 - di
                    if ihi > h:
                        ihi = h
                    for dj in range(3):
                        wv = w[o, c, di, dj]
                        jlo = 1 - dj
                        if jlo < 0:
                            jlo = 0
                        jhi = wd + 1 - dj
                        if jhi > wd:
                            jhi = wd
                        for i in range(ilo, ihi):
                            for j in range(jlo, jhi):
                                out[o, i, j] += wv * x[c, i + di - 1, j + dj - 1]
    return out_arr


def conv3x3_grad_input(double[:, :, ::1] gy, double[:, :, :, ::1] w):
    """Gradient of conv3x3_forward w.r.t. its input."""
    cdef Py_ssize_t cout = gy.shape[0], h = gy.shape[1], wd = gy.shape[2]
    cdef Py_ssize_t cin = w.shape[1]
    gx_arr = np.zeros((cin, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t o, c, a, bb, di, dj, alo, ahi, blo, bhi
    cdef double wv
    with nogil:
        for c in range(cin):
            for o in range(cout):
                for di in range(3):
                    # needs 0 <= a + 1 - di < h
                    alo = di - 1
                    if alo < 0:
                        alo = 0
                    ahi = h - 1 + di
                    if ahi > h:
                        ahi = h
                    for dj in range(3):
                        wv = w[o, c, di, dj]
                        blo = dj - 1
                        if blo < 0:
                            blo = 0
                        bhi = wd - 1 + dj
                        if bhi > wd:
                            bhi = wd
                        for a in range(alo, ahi):
                            for bb in range(blo, bhi):
                                gx[c, a, bb] += wv * gy[o, a + 1 - di, bb + 1 - dj]
    return gx_arr


def conv3x3_grad_weights(double[:, :, ::1] x, double[:, :, ::1] gy):
    """Gradient of conv3x3_forward w.r.t. the weight tensor."""
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = gy.shape[0]
    gw_arr = np.zeros((cout, cin, 3, 3), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t o, c, i, j, di, dj, ilo, ihi, jlo, jhi
    cdef double acc
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for di in range(3):
                    ilo = 1 - di
                    if ilo < 0:
                        ilo = 0
                    ihi = h + 1 - di
                    if ihi > h:
                        ihi = h
                    for dj in range(3):
                        jlo = 1 - dj
                        if jlo < 0:
                            jlo = 0
                        jhi = wd + 1 - dj
                        if jhi > wd:
                            jhi = wd
                        acc = 0.0
                        for i in range(ilo, ihi):
                            for j in range(jlo, jhi):
                                acc += gy[o, i, j] * x[c, i + di - 1, j + dj - 1]
                        gw[o, c, di, dj] = acc
    return gw_arr
