"""Time the numba and numpy versions of every hot kernel side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 150]

Each kernel is warmed up once (JIT compile) before timing. Outputs of the two
versions are compared so a speedup never hides a mismatch.
"""
import argparse
import time

import numpy as np

from iatprint import kernels
from iatprint.augment import _inverse_2x3, _source_index_nb, _source_index_np
from iatprint.render import PlotStyle, _draw_polyline_nb, _draw_polyline_py, scale_window
from iatprint.simulate import DEFAULT_PROFILE_A, sample_iats


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(size, batch):
    rng = np.random.default_rng(0)
    x1 = rng.random((batch, 3, size, size))
    w1, b1 = rng.normal(size=(32, 3, 3, 3)), np.zeros(32)
    h2 = (size - 2) // 2
    x2 = rng.random((batch, 32, h2, h2))
    w2, b2 = rng.normal(size=(32, 32, 3, 3)), np.zeros(32)
    dy2 = rng.normal(size=(batch, 32, h2 - 2, h2 - 2))
    r1 = rng.random((batch, 32, size - 2, size - 2))
    y1, arg1 = kernels.maxpool_forward_np(r1)
    pts = np.ascontiguousarray(scale_window(sample_iats(DEFAULT_PROFILE_A, 100), PlotStyle(size, size)))
    inv = _inverse_2x3([[1.1, 0.0, 0.0], [0.15, 0.9, 0.0]])

    yield ("conv1 forward", lambda: kernels.conv_forward_nb(x1, w1, b1), lambda: kernels.conv_forward_np(x1, w1, b1))
    yield ("conv2 forward", lambda: kernels.conv_forward_nb(x2, w2, b2), lambda: kernels.conv_forward_np(x2, w2, b2))
    yield ("conv2 backward", lambda: kernels.conv_backward_nb(x2, w2, dy2), lambda: kernels.conv_backward_np(x2, w2, dy2))
    yield ("pool1 forward", lambda: kernels.maxpool_forward_nb(r1), lambda: kernels.maxpool_forward_np(r1))
    yield ("pool1 backward",
           lambda: kernels.maxpool_backward_nb(y1, arg1, size - 2, size - 2),
           lambda: kernels.maxpool_backward_np(y1, arg1, size - 2, size - 2))
    yield ("rasterize",
           lambda: _draw_polyline_nb(np.zeros((size, size), np.uint8), pts),
           lambda: _draw_polyline_py(np.zeros((size, size), np.uint8), pts))
    yield ("affine index", lambda: _source_index_nb(inv, size, size), lambda: _source_index_np(inv, size, size))


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=150)
    ap.add_argument("--batch", type=int, default=16)
    args = ap.parse_args()

    print(f"{'kernel':<16}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  match")
    for name, fast, slow in cases(args.size, args.batch):
        t_nb, t_np = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<16}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x  {same(fast(), slow())}")


if __name__ == "__main__":
    main()
