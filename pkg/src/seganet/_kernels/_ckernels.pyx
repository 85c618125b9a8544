# Compiled hot loops: im2col / col2im for convolutions and the nearest
# boundary distance scan used by the Hausdorff and contour metrics.
from libc.math cimport INFINITY
from libc.string cimport memcpy

ctypedef fused real:
    float
    double


def im2col_into(const real[:, :, :, ::1] xp, real[:, :, ::1] out,
                int kh, int kw, int stride, int ho, int wo):
    cdef Py_ssize_t b, c, ki, kj, i, j
    cdef Py_ssize_t nb = xp.shape[0], nc = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]
    cdef const real* src
    cdef real* dst
    if nb == 0 or nc == 0:
        return
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for ki in range(kh):
                    for kj in range(kw):
                        dst = &out[b, (c * kh + ki) * kw + kj, 0]
                        for i in range(ho):
                            src = &xp[b, c, ki + i * stride, kj]
                            if stride == 1:
                                memcpy(dst, src, wo * sizeof(real))
                            else:
                                for j in range(wo):
                                    dst[j] = src[j * stride]
                            dst += wo


def col2im_into(const real[:, :, ::1] cols, real[:, :, :, ::1] out,
                int kh, int kw, int stride, int ho, int wo):
    # out must be zero-filled; additions per element run in (ki, kj) order
    cdef Py_ssize_t b, c, ki, kj, i, j
    cdef Py_ssize_t nb = out.shape[0], nc = out.shape[1]
    cdef const real* src
    cdef real* dst
    if nb == 0 or nc == 0:
        return
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for ki in range(kh):
                    for kj in range(kw):
                        src = &cols[b, (c * kh + ki) * kw + kj, 0]
                        for i in range(ho):
                            dst = &out[b, c, ki + i * stride, kj]
                            for j in range(wo):
                                dst[j * stride] += src[j]
                            src += wo


def min_sq_dist_into(const double[:, ::1] a, const double[:, ::1] b, double[::1] out):
    cdef Py_ssize_t i, k, na = a.shape[0], nb = b.shape[0]
    cdef double best, d, dx, dy, dz
    with nogil:
        for i in range(na):
            best = INFINITY
            for k in range(nb):
                dx = a[i, 0] - b[k, 0]
                dy = a[i, 1] - b[k, 1]
                dz = a[i, 2] - b[k, 2]
                d = dx * dx + dy * dy
                d = d + dz * dz
                if d < best:
                    best = d
            out[i] = best
