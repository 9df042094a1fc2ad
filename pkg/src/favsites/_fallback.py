"""Pure-Python / numpy versions of the compiled kernels in ``_core.pyx``.

Same signatures, same in-place state updates, same results for the same input
chunks. Where a loop can be vectorised it is; the continuous-time graph walk
stays a plain loop.
"""

from __future__ import annotations

import numpy as np


def count_visits(keys):
    uniq, counts = np.unique(np.asarray(keys, dtype=np.int64), return_counts=True)
    return uniq, counts.astype(np.int64)


def absent_translates(uniq, deltas):
    uniq = np.asarray(uniq, dtype=np.int64)
    out = np.ones(len(uniq), dtype=bool)
    if len(uniq) == 0:
        return out
    for delta in np.asarray(deltas, dtype=np.int64):
        probe = uniq + delta
        pos = np.searchsorted(uniq, probe)
        pos[pos == len(uniq)] = 0
        out &= uniq[pos] != probe
    return out


def _unit_moves(dirs, d):
    dirs = np.asarray(dirs)
    moves = np.zeros((len(dirs), d), dtype=np.int64)
    rows = np.arange(len(dirs))
    moves[rows, dirs >> 1] = 1 - 2 * (dirs & 1).astype(np.int64)
    return moves


def walk_to_event(dirs, coords, step_keys, key, targets, avoid, r2):
    dirs = np.asarray(dirs)
    if len(dirs) == 0:
        return -1, 0, key
    d = len(coords)
    path = coords + np.cumsum(_unit_moves(dirs, d), axis=0)
    keys = key + np.cumsum(np.asarray(step_keys)[dirs])
    hit_t = np.isin(keys, targets) if len(targets) else np.zeros(len(keys), bool)
    hit_a = np.isin(keys, avoid) if len(avoid) else np.zeros(len(keys), bool)
    if r2 >= 0:
        n2 = (path * path).sum(axis=1)
        hit_s = n2 + 2 * np.abs(path).max(axis=1) + 1 > r2
    else:
        hit_s = np.zeros(len(keys), bool)
    event = hit_t | hit_a | hit_s
    if event.any():
        i = int(np.argmax(event))
        code = 1 if hit_t[i] else (2 if hit_a[i] else 3)
        coords[:] = path[i]
        return i, code, int(keys[i])
    coords[:] = path[-1]
    return -1, 0, int(keys[-1])


def torus_cover(dirs, state, first_hit, local_time, n):
    dirs = np.asarray(dirs)
    x0, y0, step, unc = (int(v) for v in state)
    moves = _unit_moves(dirs, 2)
    xs = (x0 + np.cumsum(moves[:, 0])) % n
    ys = (y0 + np.cumsum(moves[:, 1])) % n
    idx = xs * n + ys
    sites, first = np.unique(idx, return_index=True)
    fresh = first_hit[sites] < 0
    new_sites, new_first = sites[fresh], first[fresh]
    hit = -1
    if len(new_sites) == unc:
        hit = int(new_first.max())
        keep = slice(0, hit + 1)
    else:
        keep = slice(0, len(dirs))
    first_hit[new_sites] = step + 1 + new_first
    np.add.at(local_time, idx[keep], 1)
    last = hit if hit >= 0 else len(dirs) - 1
    state[0], state[1] = xs[last], ys[last]
    state[2] = step + last + 1
    state[3] = unc - len(new_sites)
    return hit


def ctime_walk(holds, unifs, cur, occupation, indptr, indices, cumprob, origin, budget):
    v = int(cur[0])
    for i in range(len(holds)):
        h = holds[i]
        if v == origin and occupation[v] + h > budget:
            occupation[v] = budget
            cur[0] = v
            return i
        occupation[v] += h
        lo, hi = indptr[v], indptr[v + 1]
        j = lo + int(np.searchsorted(cumprob[lo:hi], unifs[i], side="right"))
        v = int(indices[min(j, hi - 1)])
    cur[0] = v
    return -1


def tilde_theta(keys, p, deltas):
    keys = np.asarray(keys, dtype=np.int64)
    if len(keys) == 0:
        return 0
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    starts = np.flatnonzero(np.r_[True, skeys[1:] != skeys[:-1]])
    sizes = np.diff(np.r_[starts, len(skeys)])
    uniq = skeys[starts]
    first_visit = order[starts]
    cand = sizes >= p
    if not cand.any():
        return 0
    p_visit = order[starts[cand] + p - 1]
    sites = uniq[cand]
    ok = np.ones(len(sites), dtype=bool)
    for delta in np.asarray(deltas, dtype=np.int64):
        probe = sites + delta
        pos = np.searchsorted(uniq, probe)
        inside = pos < len(uniq)
        present = np.zeros(len(sites), dtype=bool)
        present[inside] = uniq[pos[inside]] == probe[inside]
        earlier = np.zeros(len(sites), dtype=bool)
        earlier[present] = first_visit[pos[present]] <= p_visit[present]
        ok &= ~earlier
    return int(ok.sum())
