"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each row reports the best-of-N wall time per call for both backends and
checks that they produce bit-identical results.
"""
import argparse
import time

import numpy as np

from seganet import _kernels
from seganet.model import ModelConfig, build_seganet, forward
from seganet.tensor import Tensor, conv2d
from seganet.training import dice_loss


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    x = rng.standard_normal((8, 32, 66, 66)).astype(np.float32)
    cols = _kernels.im2col(x, 3, 3, 1, 64, 64)
    a = rng.uniform(0, 40, (3000, 3))
    b = rng.uniform(0, 40, (3000, 3))
    xc = Tensor(rng.standard_normal((8, 16, 64, 64)).astype(np.float32))
    w = Tensor(rng.standard_normal((32, 16, 3, 3)).astype(np.float32) * 0.1, requires_grad=True)
    params, _ = build_seganet(ModelConfig(encode_channels=(8, 16, 32, 64, 128)), seed=0)
    imgs = rng.uniform(0, 1, (8, 1, 64, 64)).astype(np.float32)
    masks = (imgs > 0.5).astype(np.float32)

    def conv_fwd_bwd():
        w.grad = None
        y = conv2d(xc, w, padding=1)
        y.backward(np.ones_like(y.data))
        return w.grad

    def train_step():
        leaves = params.leaves(requires_grad=True)
        loss = dice_loss(forward(params, imgs, leaves), masks)
        loss.backward()
        return params.gather_grad(leaves)

    return [
        ("im2col 8x32x64x64 k3", lambda: _kernels.im2col(x, 3, 3, 1, 64, 64)),
        ("col2im 8x32x64x64 k3", lambda: _kernels.col2im(cols, x.shape, 3, 3, 1, 64, 64)),
        ("min_sq_dist 3000x3000", lambda: _kernels.min_sq_dist(a, b)),
        ("conv2d fwd+bwd 16->32", conv_fwd_bwd),
        ("train step [8..128] b8", train_step),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<26}" + "".join(f"{b:>12}" for b in backends) + "   speedup  identical")
    previous = _kernels.get_backend()
    try:
        for name, fn in cases(np.random.default_rng(0)):
            times, outs = [], []
            for backend in backends:
                _kernels.set_backend(backend)
                t, out = best_of(fn, args.repeat)
                times.append(t)
                outs.append(out)
            speed = f"{times[-1] / times[0]:8.2f}x" if len(times) > 1 else "       -"
            same = all(np.array_equal(outs[0], o) for o in outs[1:])
            print(f"{name:<26}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + f"  {speed}  {same}")
    finally:
        _kernels.set_backend(previous)


if __name__ == "__main__":
    main()
