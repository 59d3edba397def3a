"""Compare the compiled bar kernel with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 2000] [--n-elem 100] [--repeat 5]
"""
import argparse
import time

import numpy as np

from cefis import _bar, _kernels_py, randfield


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=2000)
    ap.add_argument("--n-elem", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    bar = randfield.default_bar(n_elem=args.n_elem)
    rng = np.random.default_rng(0)
    theta = rng.standard_normal((args.batch, bar.dim))
    k = np.ascontiguousarray(bar.element_moduli(theta[:, 1:]) * (bar.area / bar.h))
    q = np.ascontiguousarray(bar.load_mean + bar.load_std * theta[:, 0])

    print(f"batch={args.batch} n_elem={args.n_elem} active backend={_bar.BACKEND}")
    t_py = best_of(lambda: _kernels_py.solve_tip_load(k, q), args.repeat)
    print(f"numpy fallback   {t_py * 1e3:9.2f} ms")
    if _bar.BACKEND != "cython":
        print("compiled kernel  not built")
        return
    from cefis import _kernels
    t_cy = best_of(lambda: _kernels.solve_tip_load(k, q), args.repeat)
    ref = _kernels_py.solve_tip_load(k, q)
    out = _kernels.solve_tip_load(k, q)
    err = max(float(np.max(np.abs(a - b)) / np.max(np.abs(b))) for a, b in zip(out, ref))
    print(f"compiled kernel  {t_cy * 1e3:9.2f} ms  speedup {t_py / t_cy:5.1f}x  max rel diff {err:.1e}")

    # end to end: limit state plus adjoint gradient
    t_lsf = best_of(lambda: randfield.bar_lsf(theta, bar), args.repeat)
    print(f"bar_lsf with gradient, whole batch: {t_lsf * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
