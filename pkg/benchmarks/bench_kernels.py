"""Compare the compiled transport kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 100x100 1200x40] [--repeat 10]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from moistfem import _kernels_py

try:
    from moistfem import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def residual_args(nx, nz, rng, P=2, nq=2):
    q = rng.random((nx, nz, P, P))
    u = rng.random((nx, nz, nq, nq)) - 0.5
    w = rng.random((nx, nz, nq, nq)) - 0.5
    div = rng.random((nx, nz, nq, nq)) - 0.5
    uf = rng.random((nx, nz, nq)) - 0.5
    wf = rng.random((nx, nz + 1, nq)) - 0.5
    t = rng.random((P, nq))
    e0, e1 = rng.random(P), rng.random(P)
    wq = np.full(nq, 1.0 / nq)
    return (q, u, w, div, uf, wf, t, t, t, t, e0, e1, e0, e1, wq, 1.0, 1.0, True)


def time_call(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", nargs="+", default=["100x100", "600x20", "1200x40"])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _compiled is None:
        print("compiled kernels are not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'mesh':>9} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speed-up':>9}")
    for size in args.sizes:
        nx, nz = (int(s) for s in size.split("x"))
        cases = {
            "dg_residual": residual_args(nx, nz, rng),
            "vertex_limit": (rng.random((nx, nz, 2, 2)), 1),
        }
        for name, call_args in cases.items():
            ref = getattr(_kernels_py, name)
            t_py = time_call(ref, call_args, args.repeat)
            if _compiled is None:
                print(f"{name:<12} {size:>9} {1e3 * t_py:11.2f} {'-':>14} {'-':>9}")
                continue
            fast = getattr(_compiled, name)
            a, b = ref(*call_args), fast(*call_args)
            pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
            err = max(float(np.max(np.abs(x - y))) for x, y in pairs)
            t_c = time_call(fast, call_args, args.repeat)
            print(f"{name:<12} {size:>9} {1e3 * t_py:11.2f} {1e3 * t_c:14.2f} {t_py / t_c:8.1f}x"
                  f"   max diff {err:.1e}")


if __name__ == "__main__":
    main()
