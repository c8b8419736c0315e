"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times each kernel on two problem shapes, then one full MFS construction per
backend (the backend is swapped in-process on ``forcingset.kernels``).
"""

import argparse
import timeit

import numpy as np

from forcingset import _pykernels, kernels
from forcingset.harness import halfmoon_walk

try:
    from forcingset import _kernels
except ImportError:
    _kernels = None

SHAPES = [(100, 2), (400, 50), (2000, 50)]
KERNELS = ("logits", "loss_grad", "sample_losses", "sample_grads", "hessian")


def _problem(n, d):
    rng = np.random.default_rng(0)
    X1 = np.ascontiguousarray(np.hstack([rng.normal(size=(n, d)), np.ones((n, 1))]))
    return X1, rng.integers(0, 2, size=n).astype(np.float64), rng.normal(size=d + 1)


def _time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def _args_for(name, X1, y, theta):
    return (X1, theta) if name in ("logits", "hessian") else (X1, y, theta)


def bench_kernels(repeat):
    print(f"{'kernel':<14}{'n x d':>12}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for n, d in SHAPES:
        X1, y, theta = _problem(n, d)
        for name in KERNELS:
            args = _args_for(name, X1, y, theta)
            t_py = _time(lambda: getattr(_pykernels, name)(*args), repeat)
            if _kernels is None:
                print(f"{name:<14}{f'{n}x{d}':>12}{t_py * 1e6:>14.1f}{'n/a':>14}{'':>10}")
                continue
            t_cy = _time(lambda: getattr(_kernels, name)(*args), repeat)
            print(f"{name:<14}{f'{n}x{d}':>12}{t_py * 1e6:>14.1f}{t_cy * 1e6:>14.1f}{t_py / t_cy:>9.2f}x")


def bench_end_to_end(repeat):
    impls = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    saved = {name: getattr(kernels, name) for name in KERNELS}
    print("\nhalf-moon walk (n=100, both update modes)")
    try:
        for label, mod in impls:
            for name in KERNELS:
                setattr(kernels, name, getattr(mod, name))
            t = min(timeit.repeat(lambda: halfmoon_walk(0), number=1, repeat=repeat))
            print(f"  {label:<8}{t * 1e3:8.1f} ms")
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"default backend: {kernels.BACKEND}\n")
    bench_kernels(args.repeat)
    bench_end_to_end(args.repeat)


if __name__ == "__main__":
    main()
