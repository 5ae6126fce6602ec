"""Compare the compiled and pure-Python event kernels.

    python3 benchmarks/bench_kernels.py [--n 200] [--lam 0.9] [--horizon 20]

Both backends consume the same random stream, so the script also checks
that their outputs agree exactly.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from jobpar import kernels
from jobpar.model import Erlang, encode_law


def _call(kern, name, n, d, lam, times, seed):
    init = np.zeros((0, d), dtype=np.int64)
    gen = np.random.Generator(np.random.PCG64(seed))
    if name == "workload":
        kind, params = encode_law(Erlang(4))
        return kern.workload(n, d, lam, kind, params, times, 0.0, init, np.zeros(0), gen)
    return getattr(kern, name)(n, d, lam, times, 0.0, init, gen)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--lam", type=float, default=0.9)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled backend not built; only the pure-Python kernels are available")
        return 1
    times = np.linspace(args.horizon / 10, args.horizon, 10)
    print(f"n={args.n} d={args.d} lam={args.lam} horizon={args.horizon}")
    print(f"{'kernel':12s} {'backend':8s} {'events':>10s} {'seconds':>9s} {'Mev/s':>8s} {'speedup':>8s}")
    for name in ("ctmc", "uniformized", "workload"):
        out, secs = {}, {}
        for backend in ("python", "cython"):
            kern = kernels.get(backend)
            t0 = time.perf_counter()
            out[backend] = _call(kern, name, args.n, args.d, args.lam, times, args.seed)
            secs[backend] = time.perf_counter() - t0
        events = int(out["cython"][1][4])
        for backend in ("python", "cython"):
            speed = secs["python"] / secs[backend]
            print(f"{name:12s} {backend:8s} {events:10d} {secs[backend]:9.3f} "
                  f"{events / secs[backend] / 1e6:8.3f} {speed:7.1f}x")
        same = all(np.array_equal(a, b) for a, b in zip(out["python"], out["cython"]))
        print(f"{name:12s} outputs identical: {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
