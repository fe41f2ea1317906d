#!/usr/bin/env python3
"""Compare the numba-jitted kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_backends.py [--samples N] [--repeats R]

Equivalent to `cfchain bench`. Typical output on a 2-core container:

    workload: chain of 5 APs x 2000 samples, quantizer on 8000 reals (...)
    backend         chain    quantizer
    numpy         2.467ms       73.3us
    numba         1.392ms       14.0us
    numba speedup: chain 1.77x, quantizer 5.24x
"""

import argparse

from cfchain.bench import run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()
    run_benchmark(samples=args.samples, repeats=args.repeats)


if __name__ == "__main__":
    main()
