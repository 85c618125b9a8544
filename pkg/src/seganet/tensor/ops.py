"""Differentiable primitives used by the segmentation network.

Convolutions are cross-correlations (no kernel flip) lowered to a matrix
product over im2col columns; the unfold/fold loops live in
``seganet._kernels``. Each primitive returns a new :class:`Tensor` and,
when any input requires gradients, records a backward closure.
"""
import numpy as np
from scipy.special import expit

from .. import _kernels
from ..errors import ShapeError
from .tensor import Node, Tensor


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def make_result(data, op, inputs, backward_fn):
    """Wrap ``data`` as the output of ``op``.

    ``backward_fn`` is a zero-argument factory returning the closure that
    maps the upstream gradient to a tuple of input gradients (``None`` for
    inputs that need none). It is only called when some input tracks
    gradients, so inference never keeps activations alive.
    """
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, tuple(inputs), backward_fn())
    return out


def _check_dtypes(*tensors):
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) > 1:
        raise TypeError(f"mixed tensor dtypes: {sorted(str(d) for d in dtypes)}")


def _out_extent(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation.

    x: [B, C_in, H, W], weight: [C_out, C_in, kH, kW], bias: [C_out] or None.
    Output extent is ``floor((H + 2*padding - kH) / stride) + 1``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    _check_dtypes(x, weight, bias)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    b, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {ci}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv2d bias must have shape ({co},), got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d needs stride >= 1 and padding >= 0")
    ho, wo = _out_extent(h, kh, stride, padding), _out_extent(w, kw, stride, padding)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}, kernel {kh}x{kw}")

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _kernels.im2col(xp, kh, kw, stride, ho, wo)
    w2 = weight.data.reshape(co, ci * kh * kw)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(b, co, ho, wo)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def factory():
        xp_shape = xp.shape

        def backward(g):
            g3 = g.reshape(b, co, ho * wo)
            dw = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            dx = None
            if x.requires_grad:
                dcols = np.matmul(w2.T, g3)
                dxp = _kernels.col2im(dcols, xp_shape, kh, kw, stride, ho, wo)
                dx = dxp[:, :, padding : padding + h, padding : padding + w]
            grads = (dx, dw)
            if bias is not None:
                grads += (g.sum(axis=(0, 2, 3)),)
            return grads

        return backward

    return make_result(out, "conv2d", inputs, factory)


def conv_transpose2d(x, weight, bias=None, stride=2, padding=1, output_padding=None):
    """Transposed convolution (adjoint of :func:`conv2d` w.r.t. its input).

    x: [B, C_in, H, W], weight: [C_in, C_out, kH, kW]. Output extent is
    ``(H - 1)*stride - 2*padding + kH + output_padding``. When
    ``output_padding`` is None it is chosen so the output is exactly
    ``stride * H``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    _check_dtypes(x, weight, bias)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv_transpose2d expects 4-D input and kernel")
    b, c, h, w = x.shape
    ci, co, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv_transpose2d channel mismatch: input has {c}, kernel expects {ci}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv_transpose2d bias must have shape ({co},), got {bias.shape}")

    def pick_pad(n, k):
        if output_padding is not None:
            return output_padding
        op = stride * n - ((n - 1) * stride - 2 * padding + k)
        if not 0 <= op < stride:
            raise ShapeError("cannot reach stride * H with this kernel/padding; pass output_padding")
        return op

    oph, opw = pick_pad(h, kh), pick_pad(w, kw)
    hf, wf = (h - 1) * stride + kh + oph, (w - 1) * stride + kw + opw
    ho, wo = hf - 2 * padding, wf - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv_transpose2d output would be empty")

    w2 = weight.data.reshape(ci, co * kh * kw)
    x3 = x.data.reshape(b, ci, h * w)
    cols = np.matmul(w2.T, x3)
    full = _kernels.col2im(cols, (b, co, hf, wf), kh, kw, stride, h, w)
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + bias.data[:, None, None]
    else:
        out = np.ascontiguousarray(out)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def factory():
        def backward(g):
            gfull = np.zeros((b, co, hf, wf), dtype=g.dtype)
            gfull[:, :, padding : padding + ho, padding : padding + wo] = g
            gcols = _kernels.im2col(gfull, kh, kw, stride, h, w)
            dx = np.matmul(w2, gcols).reshape(b, ci, h, w) if x.requires_grad else None
            dw = np.matmul(x3, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            grads = (dx, dw)
            if bias is not None:
                grads += (g.sum(axis=(0, 2, 3)),)
            return grads

        return backward

    return make_result(out, "conv_transpose2d", inputs, factory)


def instance_norm(x, gamma, beta, epsilon=1e-5):
    """Normalize every (sample, channel) plane over its H*W positions.

    ``gamma`` and ``beta`` ([C]) give the learnable affine; the variance
    is the population variance.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check_dtypes(x, gamma, beta)
    if x.data.ndim != 4:
        raise ShapeError("instance_norm expects [B, C, H, W]")
    b, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm affine parameters must have shape ({c},)")
    if h * w < 2:
        raise ShapeError("instance_norm needs at least two spatial positions")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(epsilon))
    xhat = centered * inv_std
    out = xhat * gamma.data[:, None, None] + beta.data[:, None, None]

    def factory():
        def backward(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dx = None
            if x.requires_grad:
                dxhat = g * gamma.data[:, None, None]
                m1 = dxhat.mean(axis=(2, 3), keepdims=True)
                m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
                dx = inv_std * (dxhat - m1 - xhat * m2)
            return dx, dgamma, dbeta

        return backward

    return make_result(out, "instance_norm", (x, gamma, beta), factory)


def _channel_view(param, ndim):
    # broadcast a per-channel vector against [B, C, ...]
    if ndim < 2:
        return param
    return param.reshape((1, -1) + (1,) * (ndim - 2))


def prelu(x, slope):
    """Parametric ReLU with one learnable negative slope per channel (axis 1)."""
    x, slope = as_tensor(x), as_tensor(slope)
    _check_dtypes(x, slope)
    nch = x.shape[1] if x.data.ndim >= 2 else 1
    if slope.data.size != nch:
        raise ShapeError(f"prelu needs {nch} slopes, got {slope.data.size}")
    if x.data.ndim >= 2:
        a = _channel_view(slope.data.reshape(-1), x.data.ndim)
    else:
        a = slope.data.reshape(())
    neg = x.data < 0
    out = np.where(neg, a * x.data, x.data)

    def factory():
        def backward(g):
            dx = np.where(neg, a * g, g) if x.requires_grad else None
            contrib = np.where(neg, x.data * g, 0)
            if x.data.ndim >= 2:
                axes = (0,) + tuple(range(2, x.data.ndim))
                dslope = contrib.sum(axis=axes).reshape(slope.shape)
            else:
                dslope = np.asarray(contrib.sum(), dtype=x.dtype).reshape(slope.shape)
            return dx, dslope

        return backward

    return make_result(out, "prelu", (x, slope), factory)


def sigmoid(x):
    """Logistic function, kept strictly inside (0, 1) at the working precision."""
    x = as_tensor(x)
    info = np.finfo(x.dtype)
    s = np.clip(expit(x.data), info.tiny, 1 - info.epsneg)

    def factory():
        def backward(g):
            return (g * s * (1 - s),)

        return backward

    return make_result(s, "sigmoid", (x,), factory)


def add(a, b):
    """Elementwise sum of two tensors with identical dims."""
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add needs identical dims, got {a.shape} and {b.shape}")

    def factory():
        return lambda g: (g, g)

    return make_result(a.data + b.data, "add", (a, b), factory)


def concat_channels(a, b):
    """Stack ``a`` then ``b`` along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes(a, b)
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError("concat_channels expects [B, C, H, W] tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels spatial/batch mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def factory():
        return lambda g: (g[:, :ca], g[:, ca:])

    return make_result(out, "concat_channels", (a, b), factory)


def slice_channels(x, start, stop):
    """Channels ``start:stop`` of a [B, C, H, W] tensor."""
    x = as_tensor(x)
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise ShapeError(f"channel slice {start}:{stop} outside 0:{c}")
    out = x.data[:, start:stop].copy()

    def factory():
        def backward(g):
            dx = np.zeros_like(x.data)
            dx[:, start:stop] = g
            return (dx,)

        return backward

    return make_result(out, "slice_channels", (x,), factory)


def crop2d(x, top, left, height, width):
    """Spatial window of a [B, C, H, W] tensor."""
    x = as_tensor(x)
    h, w = x.shape[2:]
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ShapeError("crop window exceeds the tensor")
    out = x.data[:, :, top : top + height, left : left + width].copy()

    def factory():
        def backward(g):
            dx = np.zeros_like(x.data)
            dx[:, :, top : top + height, left : left + width] = g
            return (dx,)

        return backward

    return make_result(out, "crop2d", (x,), factory)
