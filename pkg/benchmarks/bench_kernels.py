"""Compare the compiled and pure-Python kernel backends on full simulated calls.

    python3 benchmarks/bench_kernels.py [--calls N] [--repeat R]

Both backends run the same calls; the script checks the call digests match
before reporting timings.
"""

import argparse
import time

from metabwe import kernels
from metabwe.bwe import DEFAULT_POOL, make_pool
from metabwe.meta import RandomPolicy
from metabwe.sim import SimConfig, call_seed, run_call
from metabwe.trace import EVAL_REGIMES, generate_trace


def run(calls: int):
    pool = make_pool(DEFAULT_POOL)
    cfg = SimConfig()
    digests = []
    for i in range(calls):
        regime = EVAL_REGIMES[i % len(EVAL_REGIMES)]
        trace = generate_trace(regime, call_seed(0, 9, i), cfg.call_duration)
        digests.append(run_call(trace, RandomPolicy(0), pool, cfg, call_seed(0, 10, i)).digest())
    return digests


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=24)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    results = {}
    for name in kernels.backends():
        with kernels.use_backend(name):
            run(1)  # warm up
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                digests = run(args.calls)
                best = min(best, time.perf_counter() - t0)
        results[name] = (best, digests)
        print(f"{name:8s} {best:8.3f} s for {args.calls} calls "
              f"({1000 * best / args.calls:7.2f} ms/call)")
    if len(results) == 1:
        print("compiled extension not built; only the Python backend was timed")
        return
    same = results["python"][1] == results["cython"][1]
    print(f"digests identical: {same}")
    print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x")
    if not same:
        raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
