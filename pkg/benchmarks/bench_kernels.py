"""Compiled vs numpy kernels on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Each row reports the best-of-``repeat`` wall time for both backends and the
speedup. Inputs are identical across backends and outputs are checked equal.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from favsites import _fallback, hitting, kernels
from favsites import lattice as L
from favsites.graphs import cycle
from favsites.rng import generator

try:
    from favsites import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases():
    rng = generator(7)
    with kernels.use_backend("python"):
        path, _ = L.simulate_walk(3, 1_000_000, 1)
    keys = np.ascontiguousarray(path.keys)
    uniq = np.unique(keys)
    deltas = np.array([L.pack_offset((1, 0, 0)), L.pack_offset((0, 1, 0))], dtype=np.int64)
    dirs3 = rng.integers(0, 6, 2_000_000, dtype=np.uint8)
    dirs2 = rng.integers(0, 4, 2_000_000, dtype=np.uint8)
    indptr, indices, cum = cycle(4).jump_table()
    holds = rng.standard_exponential(1_000_000)
    unifs = rng.random(1_000_000)
    targets = np.zeros(0, np.int64)

    def walk(mod):
        cur = np.zeros(3, np.int64)
        return mod.walk_to_event(dirs3, cur, L.step_keys(3), int(L.pack(cur[None, :])[0]),
                                 targets, targets, -1)

    def torus(mod):
        n = 64
        first = np.full(n * n, -1, np.int64)
        lt = np.zeros(n * n, np.int64)
        state = np.array([0, 0, 0, n * n], np.int64)
        return mod.torus_cover(dirs2, state, first, lt, n), first

    def ctime(mod):
        occ = np.zeros(4)
        cur = np.array([0], np.int64)
        return mod.ctime_walk(holds, unifs, cur, occ, indptr, indices, cum, 0, 1e9), occ

    return [
        ("count_visits  (10^6-step walk)", lambda m: m.count_visits(keys)),
        ("absent_translates  (range, |H|=2)", lambda m: m.absent_translates(uniq, deltas)),
        ("walk_to_event  (2*10^6 steps, d=3)", walk),
        ("torus_cover  (to cover, n=64)", torus),
        ("ctime_walk  (10^6 jumps, 4-cycle)", ctime),
        ("tilde_theta  (10^6-step walk)", lambda m: m.tilde_theta(keys, 3, deltas)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)
    if _core is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rows = []
    for name, fn in cases():
        t_py, out_py = best_of(lambda: fn(_fallback), args.repeat)
        t_c, out_c = best_of(lambda: fn(_core), args.repeat)
        rows.append({"kernel": name, "python_s": t_py, "compiled_s": t_c, "speedup": t_py / t_c,
                     "equal": bool(same(out_py, out_c))})
    # end to end, on workloads bound by the streaming kernels
    workloads = [
        ("cover time of the 64-torus", lambda: L.simulate_torus_walk(64, 3).cover_time),
        ("200 hitting replicates, d=3, R=32",
         lambda: hitting.hitting_prob_mc(3, [(0, 0, 0)], None, None, 32, 200, 3).value),
    ]
    for label, job in workloads:
        timings = {}
        for backend in kernels.available():
            with kernels.use_backend(backend):
                timings[backend] = best_of(job, args.repeat)
        (t_py, a), (t_c, b) = timings["python"], timings["compiled"]
        rows.append({"kernel": label, "python_s": t_py, "compiled_s": t_c, "speedup": t_py / t_c,
                     "equal": a == b})
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"{'kernel':<42} {'numpy':>10} {'compiled':>10} {'speedup':>8}  equal")
    for r in rows:
        print(f"{r['kernel']:<42} {r['python_s']:>10.4f} {r['compiled_s']:>10.4f} "
              f"{r['speedup']:>8.1f}  {r['equal']}")


if __name__ == "__main__":
    main()
