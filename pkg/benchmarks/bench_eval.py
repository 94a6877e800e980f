"""Throughput benchmark for the batch evaluation backends.

Times the numba kernel against the pure-numpy path on identical candidate
matrices and prints rows/second per backend plus the speedup. The numba
figures exclude the one-off JIT compile (a warmup batch runs first).

    python3 benchmarks/bench_eval.py --rows 200000 --repeats 5
"""

import argparse
import time

import numpy as np

from systune import design_space, kernels, search, workload
from systune.perf_model import DEVICE_PRESETS


def make_rows(spec, n, seed):
    rng = np.random.default_rng(seed)
    return np.stack([kernels.point_to_row(
        search.random_genome(spec, rng).decode()) for _ in range(n)])


def bench(desc, rows, backend, repeats):
    kernels.batch_evaluate(desc, rows[:64], backend=backend)  # warmup / JIT
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernels.batch_evaluate(desc, rows, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return rows.shape[0] / best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--device", default="u250-like",
                    choices=sorted(DEVICE_PRESETS))
    args = ap.parse_args()

    device = DEVICE_PRESETS[args.device]
    cases = {
        "mm 1024^3": workload.make_mm(1024, 1024, 1024),
        "conv 64x64x56x56 3x3": workload.make_cnn(64, 64, 56, 56, 3, 3),
    }
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    if len(backends) == 1:
        print("numba not importable; numpy only")

    print(f"{args.rows} rows, best of {args.repeats}, device {device.name}")
    header = f"{'workload':24s} " + " ".join(f"{b + ' rows/s':>14s}" for b in backends)
    print(header + ("   speedup" if len(backends) == 2 else ""))
    for label, w in cases.items():
        spec = design_space.enumerate_specs(w)[0]
        desc = kernels.build_descriptor(spec, device)
        rows = make_rows(spec, args.rows, args.seed)
        rates = [bench(desc, rows, b, args.repeats) for b in backends]
        line = f"{label:24s} " + " ".join(f"{r:14,.0f}" for r in rates)
        if len(rates) == 2:
            line += f"   {rates[1] / rates[0]:6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
