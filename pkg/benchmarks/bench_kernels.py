"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--size N] [--repeat R]

Sizes default to the first layer of the laptop preset (200 x 64 weights) and a
larger vector; numba compile time is excluded by a warm-up call.
"""
import argparse
import timeit

import numpy as np

from annealbnn import _kernels

PRIOR = _kernels.prior_constants(1e-7, 1e-3, 0.1)


def cases(k, n, rng):
    beta = rng.normal(0.0, 0.05, n)
    grad = rng.normal(size=n)
    noise = rng.normal(size=n)
    mask = rng.random(n) > 0.1
    mom = np.zeros(n)
    out = np.empty(n)
    m, v = np.zeros(n), np.zeros(n)
    return {
        "log_prior": lambda: k["log_prior"](beta, *PRIOR),
        "grad_log_prior": lambda: k["grad_log_prior"](beta, *PRIOR, out),
        "add_scaled_prior_grad": lambda: k["add_scaled_prior_grad"](beta, 0.5, *PRIOR, grad),
        "sghmc_update": lambda: k["sghmc_update"](beta, mom, grad, noise, mask, 1e-7, 0.1, 1e-5),
        "sgld_update": lambda: k["sgld_update"](beta, grad, noise, mask, 1e-7, 1e-5),
        "adam_update": lambda: k["adam_update"](beta, m, v, grad, mask, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, nargs="*", default=[13345, 1_000_000])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<24}{'size':>10}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for n in args.size:
        timings = {}
        for backend in ("numpy", "numba"):
            calls = cases(_kernels.kernels(backend), n, np.random.default_rng(0))
            for name, fn in calls.items():
                fn()  # warm-up / compile
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                timings.setdefault(name, {})[backend] = best * 1e6
        for name, t in timings.items():
            print(f"{name:<24}{n:>10}{t['numpy']:>12.1f}{t['numba']:>12.1f}{t['numpy'] / t['numba']:>8.1f}x")


if __name__ == "__main__":
    main()
