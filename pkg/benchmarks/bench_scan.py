"""Throughput comparison of the scan engines.

Feeds identical pre-change streams to the compiled kernel, its pure-Python
twin, and the generic count-prefix kernel, and reports steps per second
for each. The compiled and pure engines are also checked for bitwise
agreement on the final scan value, so a run doubles as a parity smoke
test on long streams.

Usage:
    python3 benchmarks/bench_scan.py [--steps N] [--repeats R] [--seed S]
"""

from __future__ import annotations

import argparse
import time

from nipt import (
    Alphabet,
    NetworkModel,
    Pmf,
    Sensor,
    compiled_available,
    discrete_gaussian_pmf,
    generate_stream,
    make_kernel,
    make_mean_statistic,
    make_variance_statistic,
)

UNREACHABLE = 1e18


def binary_mean_model(n_sensors: int) -> NetworkModel:
    alph = Alphabet([-1, 1])
    f0 = Pmf.uniform(alph)
    stat = make_mean_statistic([-1.0, 1.0], f0, floor=1.0)
    return NetworkModel([Sensor(alph, f0, stat)] * n_sensors)


def gauss_variance_model(n_sensors: int) -> NetworkModel:
    alph = Alphabet.integer_range(-4, 4)
    f0 = discrete_gaussian_pmf(alph, 1.0)
    stat = make_variance_statistic(f0, floor=1.0)
    return NetworkModel([Sensor(alph, f0, stat)] * n_sensors)


def bench_engine(model, X, kappa, engine, repeats):
    best = float("inf")
    final = None
    for _ in range(repeats):
        kernel = make_kernel(model, kappa, capacity=X.shape[0] + 1, engine=engine)
        t0 = time.perf_counter()
        status, rows, S, u = kernel.run(X, UNREACHABLE)
        elapsed = time.perf_counter() - t0
        if status != 0 or rows != X.shape[0]:
            raise RuntimeError(f"engine {engine!r} stopped early: {status} at {rows}")
        best = min(best, elapsed)
        final = S
    return X.shape[0] / best, final


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000, help="stream length per run")
    ap.add_argument("--repeats", type=int, default=3, help="take the best of this many runs")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    cases = [
        ("binary mean x3", binary_mean_model(3), 0.25),
        ("9-letter variance x3", gauss_variance_model(3), 0.25),
    ]
    engines = ["pure", "generic"]
    if compiled_available():
        engines.insert(0, "compiled")
    else:
        print("compiled extension unavailable; benchmarking the fallback only\n")

    print(f"{args.steps} steps per run, best of {args.repeats}\n")
    header = f"{'model':<22}" + "".join(f"{e:>16}" for e in engines)
    print(header)
    print("-" * len(header))
    for name, model, kappa in cases:
        X = generate_stream(model, [], (), None, args.steps, args.seed)
        rates = {}
        finals = {}
        for engine in engines:
            rates[engine], finals[engine] = bench_engine(model, X, kappa, engine, args.repeats)
        row = f"{name:<22}" + "".join(f"{rates[e]:>11,.0f} st/s" for e in engines)
        print(row)
        if "compiled" in finals and finals["compiled"] != finals["pure"]:
            raise SystemExit(f"{name}: compiled and pure disagree on the final scan value")
        if "compiled" in rates:
            print(f"{'':<22}  compiled/pure speedup: {rates['compiled'] / rates['pure']:.1f}x")
    if "compiled" in engines:
        print("\ncompiled and pure agree bitwise on the final scan value for every model")


if __name__ == "__main__":
    main()
