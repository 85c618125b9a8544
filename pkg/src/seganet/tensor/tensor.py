"""Dense tensor with reverse-mode automatic differentiation.

Every op that touches a tensor requiring gradients records a ``Node``
holding its inputs, the activations it needs for the backward pass and a
closure mapping the upstream gradient to input gradients. Nodes carry a
creation sequence number; since an op is always created after its inputs,
sorting by that number gives a topological order and the backward pass
simply walks it in reverse.
"""
import itertools

import numpy as np

from ..errors import GraphError, NumericError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)
_seq = itertools.count()


class Node:
    __slots__ = ("op", "seq", "inputs", "backward_fn", "consumed")

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.seq = next(_seq)
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.consumed = False


class Tensor:
    """N-dimensional float array with optional gradient tracking.

    ``data`` is a numpy array (float32 or float64). Leaves created by the
    user hold ``grad`` after a backward pass; gradients accumulate across
    passes until :meth:`zero_grad` is called.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32 if dtype is None else dtype)
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dims(self):
        return list(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def is_finite(self):
        return bool(np.isfinite(self.data).all())

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def backward(self, grad=None):
        """Propagate gradients from this tensor back to every leaf.

        ``grad`` defaults to ones (the usual case being a scalar loss). A
        graph can be differentiated once; the saved activations are
        released afterwards and a second call raises :class:`GraphError`.
        """
        if self.node is None:
            if not self.requires_grad:
                raise GraphError("tensor does not require gradients")
            seed = np.ones_like(self.data) if grad is None else np.asarray(grad, self.dtype)
            self.grad = seed if self.grad is None else self.grad + seed
            return

        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient {grad.shape} does not match tensor {self.shape}")

        nodes = _collect(self)
        if any(n.consumed for n in nodes):
            raise GraphError("backward called twice on the same graph; run forward again")

        grads = {id(self.node): grad}
        for node in sorted(nodes, key=lambda n: n.seq, reverse=True):
            upstream = grads.pop(id(node), None)
            node.consumed = True
            if upstream is None:
                node.backward_fn = None
                continue
            if not np.isfinite(upstream).all():
                raise NumericError(f"non-finite gradient flowing into {node.op}")
            input_grads = node.backward_fn(upstream)
            node.backward_fn = None
            for t, g in zip(node.inputs, input_grads):
                if g is None or not t.requires_grad:
                    continue
                if t.node is None:
                    t.grad = g.copy() if t.grad is None else t.grad + g
                else:
                    key = id(t.node)
                    grads[key] = g if key not in grads else grads[key] + g


def _collect(root):
    seen = set()
    nodes = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node is None or id(t.node) in seen:
            continue
        seen.add(id(t.node))
        nodes.append(t.node)
        stack.extend(t.node.inputs)
    return nodes
