import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seganet import _kernels
from seganet.kernels_testing import run_on_backends
from seganet.model import ModelConfig, build_seganet, forward
from seganet.training import dice_loss


def test_fallback_always_available():
    assert "python" in _kernels.available_backends()


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def test_im2col_col2im_adjoint(backend, rng):
    # <im2col(x), c> == <x, col2im(c)>
    x = rng.standard_normal((2, 3, 9, 9))
    cols = _kernels.im2col(x, 3, 3, 2, 4, 4)
    c = rng.standard_normal(cols.shape)
    back = _kernels.col2im(c, x.shape, 3, 3, 2, 4, 4)
    assert np.sum(cols * c) == pytest.approx(np.sum(x * back), rel=1e-12)


@given(
    b=st.integers(1, 3),
    c=st.integers(1, 4),
    h=st.integers(3, 11),
    w=st.integers(3, 11),
    k=st.sampled_from([1, 2, 3]),
    stride=st.sampled_from([1, 2]),
    dtype=st.sampled_from([np.float32, np.float64]),
)
def test_backends_bit_identical_unfold_fold(b, c, h, w, k, stride, dtype):
    if len(_kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    x = np.random.default_rng(h * w).standard_normal((b, c, h, w)).astype(dtype)
    ho, wo = (h - k) // stride + 1, (w - k) // stride + 1
    cols = run_on_backends(lambda: _kernels.im2col(x, k, k, stride, ho, wo))
    np.testing.assert_array_equal(cols["cython"], cols["python"])
    back = run_on_backends(lambda: _kernels.col2im(cols["python"], x.shape, k, k, stride, ho, wo))
    np.testing.assert_array_equal(back["cython"], back["python"])


@given(n=st.integers(1, 60), m=st.integers(1, 60), seed=st.integers(0, 1000))
def test_backends_bit_identical_min_sq_dist(n, m, seed):
    if len(_kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    r = np.random.default_rng(seed)
    a, b = r.uniform(-20, 20, (n, 3)), r.uniform(-20, 20, (m, 3))
    res = run_on_backends(lambda: _kernels.min_sq_dist(a, b))
    np.testing.assert_array_equal(res["cython"], res["python"])


def test_min_sq_dist_matches_loop(backend, rng):
    a, b = rng.uniform(0, 5, (7, 3)), rng.uniform(0, 5, (9, 3))
    ref = [min((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2 for q in b) for p in a]
    np.testing.assert_array_equal(_kernels.min_sq_dist(a, b), ref)


def test_training_step_identical_across_backends():
    if len(_kernels.available_backends()) < 2:
        pytest.skip("compiled kernels not built")
    params, _ = build_seganet(ModelConfig(encode_channels=(4, 8, 16, 32, 64)), seed=3)
    r = np.random.default_rng(0)
    x = r.uniform(0, 1, (2, 1, 32, 32)).astype(np.float32)
    g = (r.uniform(size=x.shape) > 0.5).astype(np.float32)

    def step():
        leaves = params.leaves(True)
        loss = dice_loss(forward(params, x, leaves), g)
        loss.backward()
        return np.concatenate([[loss.data], params.gather_grad(leaves)])

    res = run_on_backends(step)
    np.testing.assert_array_equal(res["cython"], res["python"])
