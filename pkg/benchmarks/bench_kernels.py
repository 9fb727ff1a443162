"""Compare the compiled and numpy conv3d kernels on encoder-shaped inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` time per call for im2col, col2im and a full
conv3d forward + backward, and checks both backends agree bit for bit.
"""
import argparse
import timeit

import numpy as np

from srepnet import autodiff as ad
from srepnet.autodiff import kernels

# (batch, in channels, out channels, spatial) for the stride-2 encoder blocks at 64^3
SHAPES = [(4, 1, 8, 64), (4, 8, 16, 32), (4, 16, 32, 16), (4, 32, 64, 8)]


def backends():
    out = {"numpy": (kernels.im2col3d_numpy, kernels.col2im3d_numpy)}
    try:
        from srepnet.autodiff import _kernels
        out["cython"] = (_kernels.im2col3d, _kernels.col2im3d)
    except ImportError:
        pass
    return out


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def conv_step(x, w):
    x.grad = w.grad = None
    y = ad.conv3d(x, w, stride=2, padding=1)
    ad.sum(ad.square(y)).backward()
    return x.grad


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    impls = backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(impls)}")
    print(f"{'shape':>22} {'backend':>7} {'im2col ms':>10} {'col2im ms':>10} {'conv f+b ms':>12}")
    for nb, cin, cout, n in SHAPES:
        xp = np.ascontiguousarray(rng.random((nb, cin, n + 2, n + 2, n + 2)))
        o = (n + 2 - 3) // 2 + 1
        x = ad.Tensor(rng.random((nb, cin, n, n, n)), requires_grad=True)
        w = ad.Tensor(rng.normal(size=(cout, cin, 3, 3, 3)), requires_grad=True)
        results = {}
        for name, (im2col, col2im) in impls.items():
            cols = im2col(xp, 3, 3, 3, 2, o, o, o)
            back = col2im(cols, n + 2, n + 2, n + 2, 2)
            t_im = best(lambda: im2col(xp, 3, 3, 3, 2, o, o, o), args.repeat)
            t_col = best(lambda: col2im(cols, n + 2, n + 2, n + 2, 2), args.repeat)
            saved = kernels.im2col3d, kernels.col2im3d
            kernels.im2col3d, kernels.col2im3d = im2col, col2im
            try:
                grad = conv_step(x, w).copy()
                t_conv = best(lambda: conv_step(x, w), args.repeat)
            finally:
                kernels.im2col3d, kernels.col2im3d = saved
            results[name] = (cols, back, grad)
            shape = f"{nb}x{cin}x{n}^3 -> {cout}"
            print(f"{shape:>22} {name:>7} {1e3 * t_im:10.2f} {1e3 * t_col:10.2f} {1e3 * t_conv:12.2f}")
        if len(results) == 2:
            a, b = results.values()
            same = all(np.array_equal(u, v) for u, v in zip(a, b))
            print(f"{'':>22} bit-identical: {same}")


if __name__ == "__main__":
    main()
