# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror ``favsites._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, uint64_t

cnp.import_array()

cdef int64_t EMPTY = -1


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xbf58476d1ce4e5b9
    z = (z ^ (z >> 27)) * <uint64_t>0x94d049bb133111eb
    return z ^ (z >> 31)


cdef class _Table:
    """Open-addressing map from non-negative int64 keys to int64 counts.

    Keys and counts are interleaved in one array. The slot keeps the low
    (x-coordinate) bits of the key and scrambles the rest, so runs of sites along
    a row stay in nearby slots.
    """
    cdef object _arr
    cdef int64_t* slots
    cdef uint64_t mask
    cdef Py_ssize_t size, cap

    def __cinit__(self, Py_ssize_t expected):
        cdef Py_ssize_t cap = 16
        while cap < 2 * expected + 2:
            cap <<= 1
        self._arr = np.full(2 * cap, EMPTY, dtype=np.int64)
        self.slots = <int64_t*>cnp.PyArray_DATA(self._arr)
        self.mask = cap - 1
        self.cap = cap
        self.size = 0

    cdef inline Py_ssize_t slot(self, int64_t key) noexcept nogil:
        cdef uint64_t h = (<uint64_t>key + _mix(<uint64_t>key >> 21)) & self.mask
        while self.slots[2 * h] != EMPTY and self.slots[2 * h] != key:
            h = (h + 1) & self.mask
        return <Py_ssize_t>h

    cdef inline int64_t add(self, int64_t key) noexcept nogil:
        cdef Py_ssize_t s = 2 * self.slot(key)
        if self.slots[s] == EMPTY:
            self.slots[s] = key
            self.slots[s + 1] = 1
            self.size += 1
        else:
            self.slots[s + 1] += 1
        return self.slots[s + 1]

    cdef inline bint contains(self, int64_t key) noexcept nogil:
        return self.slots[2 * self.slot(key)] == key


def count_visits(const int64_t[::1] keys):
    cdef Py_ssize_t n = keys.shape[0], i, j = 0
    cdef _Table table = _Table(n)
    with nogil:
        for i in range(n):
            table.add(keys[i])
    pairs = table._arr.reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != EMPTY]
    order = np.argsort(pairs[:, 0])
    return pairs[order, 0].copy(), pairs[order, 1].copy()


def absent_translates(const int64_t[::1] uniq, const int64_t[::1] deltas):
    cdef Py_ssize_t n = uniq.shape[0], k = deltas.shape[0], i, m
    cdef _Table table = _Table(n)
    out = np.ones(n, dtype=np.bool_)
    cdef uint8_t[::1] o = out.view(np.uint8)
    with nogil:
        for i in range(n):
            table.add(uniq[i])
        for i in range(n):
            for m in range(k):
                if table.contains(uniq[i] + deltas[m]):
                    o[i] = 0
                    break
    return out


cdef inline bint _sorted_has(const int64_t[::1] arr, int64_t key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo < arr.shape[0] and arr[lo] == key


def walk_to_event(const uint8_t[::1] dirs, int64_t[::1] coords, const int64_t[::1] step_keys,
                  int64_t key, const int64_t[::1] targets, const int64_t[::1] avoid,
                  int64_t r2):
    """Advance a lattice walk through ``dirs`` until it enters ``targets`` (code 1),
    ``avoid`` (code 2) or the inner shell of the ball of squared radius ``r2``
    (code 3). Returns ``(index, code, key)``; index is -1 when the chunk ends first."""
    cdef Py_ssize_t i, m = dirs.shape[0], d = coords.shape[0], a
    cdef int axis, sign
    cdef int64_t n2, mx, c
    for i in range(m):
        axis = dirs[i] >> 1
        sign = 1 - 2 * (dirs[i] & 1)
        coords[axis] += sign
        key += step_keys[dirs[i]]
        if targets.shape[0] and _sorted_has(targets, key):
            return i, 1, key
        if avoid.shape[0] and _sorted_has(avoid, key):
            return i, 2, key
        if r2 >= 0:
            n2 = 0
            mx = 0
            for a in range(d):
                c = coords[a]
                n2 += c * c
                if c < 0:
                    c = -c
                if c > mx:
                    mx = c
            if n2 + 2 * mx + 1 > r2:
                return i, 3, key
    return -1, 0, key


def torus_cover(const uint8_t[::1] dirs, int64_t[::1] state, int64_t[::1] first_hit,
                int64_t[::1] local_time, int64_t n):
    """state = (x, y, steps_taken, uncovered). Returns the chunk index at which the
    last site was covered, or -1."""
    cdef Py_ssize_t i, m = dirs.shape[0]
    cdef int64_t x = state[0], y = state[1], step = state[2], unc = state[3], idx
    cdef uint8_t c
    cdef Py_ssize_t hit = -1
    for i in range(m):
        c = dirs[i]
        if c == 0:
            x += 1
            if x == n:
                x = 0
        elif c == 1:
            x -= 1
            if x < 0:
                x = n - 1
        elif c == 2:
            y += 1
            if y == n:
                y = 0
        else:
            y -= 1
            if y < 0:
                y = n - 1
        step += 1
        idx = x * n + y
        local_time[idx] += 1
        if first_hit[idx] < 0:
            first_hit[idx] = step
            unc -= 1
            if unc == 0:
                hit = i
                break
    state[0] = x
    state[1] = y
    state[2] = step
    state[3] = unc
    return hit


def ctime_walk(const double[::1] holds, const double[::1] unifs, int64_t[::1] cur,
               double[::1] occupation, const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] cumprob, int64_t origin, double budget):
    """Continuous-time walk with unit jump rate. Stops once the raw occupation time
    of ``origin`` would exceed ``budget``; that time is then set to ``budget``.
    Returns the index of the stopping draw or -1."""
    cdef Py_ssize_t i, m = holds.shape[0], lo, hi, mid
    cdef int64_t v = cur[0]
    cdef double u
    for i in range(m):
        if v == origin and occupation[v] + holds[i] > budget:
            occupation[v] = budget
            cur[0] = v
            return i
        occupation[v] += holds[i]
        lo = indptr[v]
        hi = indptr[v + 1] - 1
        u = unifs[i]
        while lo < hi:
            mid = (lo + hi) >> 1
            if cumprob[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        v = indices[lo]
    cur[0] = v
    return -1


def tilde_theta(const int64_t[::1] keys, int64_t p, const int64_t[::1] deltas):
    """Count sites whose p-th visit happens while no translate site+h has been visited."""
    cdef Py_ssize_t n = keys.shape[0], i, m, k = deltas.shape[0]
    cdef _Table table = _Table(n)
    cdef int64_t total = 0
    cdef bint ok
    with nogil:
        for i in range(n):
            if table.add(keys[i]) == p:
                ok = True
                for m in range(k):
                    if table.contains(keys[i] + deltas[m]):
                        ok = False
                        break
                if ok:
                    total += 1
    return total
