"""Kernel backend selection.

Two implementations of the hot kernels exist: ``_native`` (compiled
extension) and ``_numpy`` (vectorized NumPy). Measured on desk-scale
inputs, the compiled per-pixel loops win the solver kernels (pd_iterate,
capped_simplex_project) by about 5x, while the im2col/BLAS path wins the
3x3 convolutions; the default "auto" mode therefore binds the measured
winner per kernel and falls back to NumPy everywhere when the extension
is missing. Set LIFTSEG_BACKEND to ``numpy`` or ``native`` to force every
kernel onto one module (forcing ``native`` raises if the extension was
not built). See benchmarks/bench_backends.py for the numbers.
"""
import os

from liftseg._kernels import _numpy


def load_backend(name):
    """Return the raw backend module for the given name."""
    if name == "numpy":
        return _numpy
    if name == "native":
        from liftseg._kernels import _native
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["numpy"]
    try:
        load_backend("native")
        names.append("native")
    except ImportError:
        pass
    return names


_requested = os.environ.get("LIFTSEG_BACKEND", "auto").strip().lower() or "auto"
if _requested == "auto":
    try:
        _solver_impl = load_backend("native")
        BACKEND = "mixed"  # native solver kernels + BLAS convolutions
    except ImportError:
        _solver_impl = _numpy
        BACKEND = "numpy"
    _conv_impl = _numpy
elif _requested in ("numpy", "native"):
    _solver_impl = _conv_impl = load_backend(_requested)
    BACKEND = _requested
else:
    raise ValueError(
        f"LIFTSEG_BACKEND must be 'auto', 'numpy', or 'native', got {_requested!r}"
    )

capped_simplex_project = _solver_impl.capped_simplex_project
pd_iterate = _solver_impl.pd_iterate
conv3x3_forward = _conv_impl.conv3x3_forward
conv3x3_grad_input = _conv_impl.conv3x3_grad_input
conv3x3_grad_weights = _conv_impl.conv3x3_grad_weights
