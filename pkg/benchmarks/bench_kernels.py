"""Time the numba sample kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--n 1000000] [--repeat 7]

The numba timings exclude the first (compiling) call.
"""

import argparse
import timeit

import numpy as np

from fdsic import _accel


def cases(x):
    return {
        "cubic": ((x, 10.0, -2.5), _accel.cubic_np, _accel.cubic),
        "rapp": ((x, 4.7, 0.8, 3.0), _accel.rapp_np, _accel.rapp),
        "quantize": ((x, 0.01, 0.5), _accel.quantize_np, _accel.quantize),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000, help="samples per call")
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    x = (rng.standard_normal(args.n) + 1j * rng.standard_normal(args.n)) * 0.3
    print(f"backend: {_accel.backend()}, {args.n} samples, best of {args.repeat}")
    print(f"{'kernel':<10}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  max |diff|")
    for name, (a, ref, fast) in cases(x).items():
        fast(*a)  # compile
        t_np = min(timeit.repeat(lambda: ref(*a), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(ref(*a) - fast(*a))))
        print(f"{name:<10}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
