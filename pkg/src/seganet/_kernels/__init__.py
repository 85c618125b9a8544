"""Hot kernels with a compiled core and a numpy fallback.

The Cython module is used when it was built; otherwise the numpy versions
take over transparently. ``set_backend`` switches explicitly, which the
benchmark and the backend-equivalence tests rely on.
"""
import numpy as np

from . import _fallback

try:
    from . import _ckernels
except ImportError:  # not compiled
    _ckernels = None

_active = "cython" if _ckernels is not None else "python"


def available_backends():
    return ("cython", "python") if _ckernels is not None else ("python",)


def get_backend():
    return _active


def set_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend."""
    global _active
    if name not in ("cython", "python"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "cython" and _ckernels is None:
        raise ImportError("compiled kernels are not built; reinstall with Cython available")
    previous, _active = _active, name
    return previous


def im2col(xp, kh, kw, stride, ho, wo):
    """Unfold ``xp`` [B, C, Hp, Wp] into columns [B, C*kh*kw, ho*wo]."""
    if _active == "python":
        return _fallback.im2col(xp, kh, kw, stride, ho, wo)
    xp = np.ascontiguousarray(xp)
    b, c = xp.shape[:2]
    out = np.empty((b, c * kh * kw, ho * wo), dtype=xp.dtype)
    _ckernels.im2col_into(xp, out, kh, kw, stride, ho, wo)
    return out


def col2im(cols, shape, kh, kw, stride, ho, wo):
    """Scatter-add columns back onto an image of ``shape`` (adjoint of im2col)."""
    if _active == "python":
        return _fallback.col2im(cols, shape, kh, kw, stride, ho, wo)
    cols = np.ascontiguousarray(cols)
    out = np.zeros(shape, dtype=cols.dtype)
    _ckernels.col2im_into(cols, out, kh, kw, stride, ho, wo)
    return out


def min_sq_dist(a, b):
    """For each row of ``a`` [n, 3], the smallest squared distance to any row of ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if _active == "python":
        return _fallback.min_sq_dist(a, b)
    out = np.empty(a.shape[0], dtype=np.float64)
    _ckernels.min_sq_dist_into(a, b, out)
    return out
