"""Central finite-difference verification of analytic gradients."""
import numpy as np

from ..errors import NumericError
from .tensor import Tensor


def _projected_difference(plus, minus, weights):
    # project the elementwise difference rather than differencing two
    # projections: avoids cancelling the large shared part of the sums
    diff = plus.data - minus.data
    if weights is None:
        return float(diff.reshape(()))
    return float(np.sum(diff * weights))


def grad_check(fn, inputs, h=1e-5, seed=0, check=None):
    """Largest relative error between backprop and central differences.

    ``fn`` maps Tensors to a Tensor. Non-scalar outputs are reduced with a
    fixed random projection so every output element contributes. Inputs
    are converted to float64 leaves; ``check`` optionally restricts the
    comparison to a subset of input positions (default: all of them).

    The error per element is ``|analytic - numeric| / max(|analytic|,
    |numeric|, 1e-12)``.
    """
    arrays = [np.array(a.data if isinstance(a, Tensor) else a, dtype=np.float64) for a in inputs]
    check = range(len(arrays)) if check is None else check
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError("grad_check inputs must be finite")

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    if not out.is_finite():
        raise NumericError("grad_check: forward produced non-finite values")
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal(out.shape) if out.data.size > 1 else None
    seed_grad = np.ones_like(out.data) if weights is None else weights
    out.backward(seed_grad)

    worst = 0.0
    for idx in check:
        analytic = leaves[idx].grad
        if analytic is None:
            analytic = np.zeros_like(arrays[idx])
        base = arrays[idx]
        flat = base.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            plus = fn(*[Tensor(a) for a in arrays])
            flat[k] = orig - h
            minus = fn(*[Tensor(a) for a in arrays])
            flat[k] = orig
            numeric = _projected_difference(plus, minus, weights) / (2 * h)
            an = float(analytic.reshape(-1)[k])
            if not (np.isfinite(numeric) and np.isfinite(an)):
                raise NumericError("grad_check encountered non-finite derivatives")
            err = abs(an - numeric) / max(abs(an), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
