"""Compare the numba and numpy kernel backends on build and query time.

    python3 benchmarks/bench_backends.py --n 3000 --d 32 --queries 100

Both backends must produce identical graphs and query results; the script
exits nonzero if they do not.
"""

import argparse
import sys
import time

import numpy as np

from ipnsw import synth_gaussian
from ipnsw.mips_index import ipnsw_build, ipnsw_query, ipnswplus_build, ipnswplus_query


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run(n, d, nq, M, l_build, l, seed):
    ds = synth_gaussian(n, d, ("scaled-top", 0.05, 3.0), seed)
    Q = synth_gaussian(nq, d, "iid", seed + 1).items
    warm = synth_gaussian(64, d, "iid", 0)
    results = {}
    for backend in ("numba", "numpy"):
        # compile (numba) or warm caches (numpy) on a tiny instance first
        ipnswplus_query(ipnswplus_build(warm, M=8, l_build=16, backend=backend), warm,
                        warm.items[0], backend=backend)
        ip, t_ip = _timed(lambda: ipnsw_build(ds, M, l_build, backend=backend))
        plus, t_plus = _timed(lambda: ipnswplus_build(ds, M=M, l_build=l_build, backend=backend))
        r_ip, q_ip = _timed(lambda: [ipnsw_query(ip, ds, q, l=l, backend=backend)[0] for q in Q])
        r_plus, q_plus = _timed(
            lambda: [ipnswplus_query(plus, ds, q, l=l, backend=backend)[0] for q in Q])
        results[backend] = {
            "graphs": (ip.graph.to_bytes(), plus.ip_graph.to_bytes(),
                       plus.angular_graph.to_bytes()),
            "ids": (np.array(r_ip), np.array(r_plus)),
            "times": (t_ip, t_plus, q_ip / nq * 1e6, q_plus / nq * 1e6),
        }
    return results


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--l-build", type=int, default=100)
    p.add_argument("--l", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)

    res = run(args.n, args.d, args.queries, args.M, args.l_build, args.l, args.seed)
    print(f"n={args.n} d={args.d} queries={args.queries} M={args.M} "
          f"l_build={args.l_build} l={args.l}")
    print(f"{'backend':<8} {'ipnsw build s':>14} {'plus build s':>13} "
          f"{'ipnsw us/q':>11} {'plus us/q':>10}")
    for name, r in res.items():
        print(f"{name:<8} " + " ".join(f"{v:>{w}.3f}" for v, w in zip(r["times"], (14, 13, 11, 10))))
    a, b = res["numba"], res["numpy"]
    speed = [y / x for x, y in zip(a["times"], b["times"])]
    print("numpy/numba ratio  " + "  ".join(f"{s:.1f}x" for s in speed))
    same = a["graphs"] == b["graphs"] and all(
        np.array_equal(x, y) for x, y in zip(a["ids"], b["ids"]))
    print("identical results:", same)
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
