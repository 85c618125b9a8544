"""Pure numpy versions of the hot kernels.

Accumulation order matches the compiled core exactly, so both backends
produce bit-identical results.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

name = "python"


def im2col(xp, kh, kw, stride, ho, wo):
    b, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # [B, C, Ho, Wo, kh, kw] -> [B, C, kh, kw, Ho, Wo]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(b, c * kh * kw, ho * wo)


def col2im(cols, shape, kh, kw, stride, ho, wo):
    b, c, hp, wp = shape
    out = np.zeros(shape, dtype=cols.dtype)
    cols6 = cols.reshape(b, c, kh, kw, ho, wo)
    for ki in range(kh):
        hi = ki + stride * (ho - 1) + 1
        for kj in range(kw):
            wj = kj + stride * (wo - 1) + 1
            out[:, :, ki:hi:stride, kj:wj:stride] += cols6[:, :, ki, kj]
    return out


def min_sq_dist(a, b, chunk=2048):
    out = np.empty(a.shape[0], dtype=np.float64)
    for start in range(0, a.shape[0], chunk):
        pa = a[start : start + chunk]
        d = (pa[:, None, 0] - b[None, :, 0]) ** 2
        d += (pa[:, None, 1] - b[None, :, 1]) ** 2
        d += (pa[:, None, 2] - b[None, :, 2]) ** 2
        out[start : start + chunk] = d.min(axis=1)
    return out
