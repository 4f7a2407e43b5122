"""Compare the compiled and pure-Python tree kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Times the split scan,
tree traversal and a full booster fit under each backend and checks that
both backends produce identical results.
"""

import argparse
import time

import numpy as np

from gnnuplift import _kernels
from gnnuplift._kernels import _pykernels
from gnnuplift.teacher import GbdtParams, fit_gbdt

try:
    from gnnuplift._kernels import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def use_backend(mod):
    _kernels.best_split_sorted = mod.best_split_sorted
    _kernels.predict_tree = mod.predict_tree


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.random((args.n, args.d))
    y = np.sin(4 * x[:, 0]) + x[:, 1] * x[:, 2] + 0.1 * rng.normal(size=args.n)
    order = np.argsort(x[:, 0], kind="stable")
    xs, rs = x[order, 0].copy(), y[order].copy()

    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.insert(0, ("cython", _ckernels))
    else:
        print("compiled extension not available; timing the fallback only")

    results = {}
    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'backend':8s} {'split scan':>12s} {'fit (100 trees)':>16s} {'predict':>10s}")
    for name, mod in backends:
        use_backend(mod)
        t_split, split = best_of(lambda: [mod.best_split_sorted(xs, rs, 8, 64) for _ in range(200)], args.repeat)
        t_fit, model = best_of(lambda: fit_gbdt(x, y, GbdtParams()), args.repeat)
        t_pred, pred = best_of(lambda: model.predict_raw(x), args.repeat)
        results[name] = (split[0], model.to_dict(), pred)
        print(f"{name:8s} {t_split / 200 * 1e6:10.1f}us {t_fit:15.3f}s {t_pred * 1e3:8.2f}ms")

    if len(results) == 2:
        a, b = results["cython"], results["python"]
        same = a[0] == b[0] and a[1] == b[1] and np.array_equal(a[2], b[2])
        print("backends identical:", same)


if __name__ == "__main__":
    main()
