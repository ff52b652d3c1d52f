"""Compare the compiled kernels against the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from diffcorr import _pykernels

try:
    from diffcorr import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args, repeats=20):
    best = np.inf
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def bench_dense_cosine(rng):
    print("dense_cosine (one query vs all cells)")
    for h, w, c in [(32, 32, 256), (64, 64, 640), (96, 96, 1280)]:
        query = rng.standard_normal(c)
        data = rng.standard_normal((c, h, w)).astype(np.float32)
        t_py, ref = timeit(_pykernels.dense_cosine, query, data)
        line = f"  {c:4d}x{h}x{w}:  numpy {1e3 * t_py:7.2f} ms"
        if _ckernels is not None:
            t_cy, got = timeit(_ckernels.dense_cosine, query, data)
            assert np.allclose(ref, got, atol=1e-12)
            line += f"   cython {1e3 * t_cy:7.2f} ms   ({t_py / t_cy:4.1f}x)"
        print(line)


def bench_propagate(rng):
    print("propagate_frame (label propagation, one frame)")
    for h, w, c, ctx in [(30, 30, 128, 4), (60, 60, 128, 8)]:
        target = rng.standard_normal((c, h, w))
        feats = rng.standard_normal((ctx, c, h, w))
        probs = rng.random((ctx, 3, h, w))
        probs /= probs.sum(axis=1, keepdims=True)
        args = (target, feats, probs, 0.1, 5, 10)
        t_py, ref = timeit(_pykernels.propagate_frame, *args, repeats=5)
        line = f"  grid {h}x{w}, {ctx} ctx:  numpy {1e3 * t_py:7.1f} ms"
        if _ckernels is not None:
            t_cy, got = timeit(_ckernels.propagate_frame, *args, repeats=5)
            assert np.allclose(ref, got, atol=1e-10)
            line += f"   cython {1e3 * t_cy:7.1f} ms   ({t_py / t_cy:4.1f}x)"
        print(line)


def main():
    if _ckernels is None:
        print("compiled kernels unavailable; timing the numpy fallback only\n")
    rng = np.random.default_rng(0)
    bench_dense_cosine(rng)
    print()
    bench_propagate(rng)


if __name__ == "__main__":
    main()
