"""Time the compiled and pure-Python integration kernels on the same run.

    python3 benchmarks/bench_kernel.py --horizon 2ms --capacitance 20u
"""

import argparse
import statistics
import sys
import time

import numpy as np

from ppdn import kernel
from ppdn.cli import parse_quantity
from ppdn.netmodel import reference_config
from ppdn.simulator import simulate


def time_backend(cfg, backend, horizon, repeat):
    runs = []
    trace = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace, _, _ = simulate(cfg, horizon=horizon, backend=backend, record_every=10**9)
        runs.append(time.perf_counter() - t0)
    return runs, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", default="2ms", help="simulated time per run")
    ap.add_argument("--capacitance", default="20u", help="storage capacitance of every router")
    ap.add_argument("--routers", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = reference_config(parse_quantity(args.capacitance, "F"), n=args.routers)
    horizon = parse_quantity(args.horizon, "s")
    backends = ["python"] + (["cython"] if kernel.compiled_run_segment is not None else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the Python kernel only", file=sys.stderr)

    results = {}
    for name in backends:
        runs, trace = time_backend(cfg, name, horizon, args.repeat)
        results[name] = (statistics.median(runs), trace)
        print(f"{name:>7}: median {results[name][0]:.3f} s over {args.repeat} runs "
              f"({horizon * 1e3:g} ms simulated, {len(trace.cycles)} cycles)")
    if "cython" in results:
        (tp, a), (tc, b) = results["python"], results["cython"]
        dev = max(float(np.max(np.abs(ca.v_high - cb.v_high))) for ca, cb in zip(a.cycles, b.cycles))
        print(f"speedup {tp / tc:.1f}x, largest cycle-extremum difference {dev:.1e} V")
    return 0


if __name__ == "__main__":
    sys.exit(main())
