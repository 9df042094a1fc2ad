"""Simple random walks on Z^d and on the discrete torus Z_n^2.

Sites are packed into one int64 key with 21 bits per coordinate (d <= 3)::

    key = sum_i (x_i + 2**20) * 2**(21 i)

The packing is linear, so translating a site by ``h`` adds ``pack_offset(h)``
to its key. Coordinates must stay in ``[-2**20, 2**20 - 1]``; walks of fewer
than ``2**20`` steps cannot leave that range, longer walks are checked on their
realised extent and rejected if they do.
"""

from __future__ import annotations

import csv
import io
import itertools
import struct
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .rng import chunk_sizes, generator

BITS = 21
OFFSET = 1 << (BITS - 1)
MAX_DIM = 3
DEFAULT_MAX_STEPS = 50_000_000
INF = np.iinfo(np.int64).max


class WalkError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    """A walk hit its step cap before its stopping event.

    ``partial`` holds the path simulated so far (a :class:`WalkPath`) or, for the
    torus walk, the partial :class:`TorusVisitRecord`.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class HorizonReached(BudgetExceeded):
    @property
    def uncovered(self):
        return self.partial.uncovered_sites()


class PatternError(ValueError):
    pass


# ---------------------------------------------------------------- packing

def _check_dim(d):
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise WalkError(f"dimension must be a positive integer, got {d!r}")
    if d > MAX_DIM:
        raise WalkError(f"dimension {d} exceeds the packed-key limit of {MAX_DIM}")


def pack(sites) -> np.ndarray:
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim == 1:
        sites = sites[None, :]
    if sites.shape[1] > MAX_DIM:
        raise WalkError("at most 3 coordinates can be packed")
    if sites.size and (sites.min() < -OFFSET or sites.max() >= OFFSET):
        raise WalkError("coordinate outside the 21-bit packing range")
    keys = np.zeros(len(sites), dtype=np.int64)
    for i in range(MAX_DIM):
        col = sites[:, i] if i < sites.shape[1] else 0
        keys += (col + OFFSET) << (BITS * i)
    return keys


def unpack(keys, d: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    mask = (1 << BITS) - 1
    return np.stack([((keys >> (BITS * i)) & mask) - OFFSET for i in range(d)], axis=-1)


def pack_offset(h) -> int:
    """Key increment corresponding to translation by ``h``."""
    return int(sum(int(c) << (BITS * i) for i, c in enumerate(h)))


def step_keys(d: int) -> np.ndarray:
    """Key increment of each direction code 0..2d-1 (code 2i is +e_i, 2i+1 is -e_i)."""
    return np.array([(1 - 2 * (c & 1)) << (BITS * (c >> 1)) for c in range(2 * d)], dtype=np.int64)


def unit_moves(d: int) -> np.ndarray:
    moves = np.zeros((2 * d, d), dtype=np.int64)
    for c in range(2 * d):
        moves[c, c >> 1] = 1 - 2 * (c & 1)
    return moves


def neighbors(d: int) -> list[tuple[int, ...]]:
    """The 2d unit vectors, N(0)."""
    return [tuple(int(v) for v in row) for row in unit_moves(d)]


def neighbor_subsets(d: int, k: int) -> list[tuple[tuple[int, ...], ...]]:
    """All k-element subsets of N(0)."""
    return list(itertools.combinations(neighbors(d), k))


# ---------------------------------------------------------------- site sets

@dataclass(frozen=True, eq=False)
class SiteSet:
    """Exact finite set of lattice sites, stored as sorted packed keys."""

    dimension: int
    keys: np.ndarray

    @classmethod
    def from_sites(cls, sites, dimension: int | None = None) -> "SiteSet":
        sites = [tuple(int(c) for c in s) for s in sites]
        if dimension is None:
            if not sites:
                raise ValueError("dimension required for an empty site set")
            dimension = len(sites[0])
        if any(len(s) != dimension for s in sites):
            raise ValueError("mixed dimensions in site set")
        keys = pack(np.array(sites, dtype=np.int64).reshape(-1, dimension)) if sites else np.zeros(0, np.int64)
        return cls(dimension, np.unique(keys))

    @classmethod
    def from_keys(cls, keys, dimension: int) -> "SiteSet":
        return cls(dimension, np.unique(np.asarray(keys, dtype=np.int64)))

    def sites(self) -> np.ndarray:
        return unpack(self.keys, self.dimension)

    def __len__(self):
        return len(self.keys)

    def __iter__(self):
        return (tuple(int(c) for c in s) for s in self.sites())

    def __contains__(self, site):
        k = pack(np.array(site, dtype=np.int64)[None, :])[0]
        i = np.searchsorted(self.keys, k)
        return bool(i < len(self.keys) and self.keys[i] == k)

    def __eq__(self, other):
        return (isinstance(other, SiteSet) and self.dimension == other.dimension
                and np.array_equal(self.keys, other.keys))

    def __hash__(self):
        return hash((self.dimension, self.keys.tobytes()))

    def __and__(self, other):
        return SiteSet(self.dimension, np.intersect1d(self.keys, other.keys))

    def __or__(self, other):
        return SiteSet(self.dimension, np.union1d(self.keys, other.keys))

    def __sub__(self, other):
        return SiteSet(self.dimension, np.setdiff1d(self.keys, other.keys))

    def issubset(self, other) -> bool:
        return bool(np.isin(self.keys, other.keys).all())

    def translate(self, h) -> "SiteSet":
        return SiteSet(self.dimension, self.keys + pack_offset(h))

    def __repr__(self):
        shown = list(itertools.islice(iter(self), 6))
        more = ", ..." if len(self) > 6 else ""
        return f"SiteSet(d={self.dimension}, {shown}{more}, size={len(self)})"


def ball(d: int, r: float, center=None) -> SiteSet:
    """D(x, r) = {y : |x - y| <= r}."""
    _check_dim(d)
    R = int(np.floor(r))
    ax = np.arange(-R, R + 1)
    grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    grid = grid[(grid ** 2).sum(1) <= r * r]
    if center is not None:
        grid = grid + np.asarray(center, dtype=np.int64)
    return SiteSet(d, np.unique(pack(grid)))


# ---------------------------------------------------------------- patterns

class Validity(Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNCHECKED = "unchecked"


@dataclass(frozen=True)
class BoundaryPattern:
    """Finite translate set H with a membership certificate for the class H(M).

    Use :meth:`certify` to build a checked pattern; only ``VALID`` patterns are
    accepted by the boundary operations.
    """

    offsets: tuple
    max_size: int
    validity: Validity = Validity.UNCHECKED
    reason: str = ""

    @property
    def dimension(self) -> int:
        return len(self.offsets[0]) if self.offsets else 0

    @classmethod
    def certify(cls, offsets, max_size: int | None = None, dimension: int | None = None) -> "BoundaryPattern":
        offs = tuple(sorted({tuple(int(c) for c in h) for h in offsets}))
        M = len(offs) if max_size is None else int(max_size)
        if not offs:
            return cls(offs, M, Validity.INVALID, "empty pattern")
        d = len(offs[0])
        if dimension is not None and d != dimension:
            return cls(offs, M, Validity.INVALID, f"pattern dimension {d} != {dimension}")
        if any(len(h) != d for h in offs):
            return cls(offs, M, Validity.INVALID, "mixed dimensions")
        if (0,) * d in offs:
            return cls(offs, M, Validity.INVALID, "pattern contains the origin")
        if len(offs) > M:
            return cls(offs, M, Validity.INVALID, f"|H| = {len(offs)} exceeds M = {M}")
        ok, why = _complement_connected(np.array(offs), d)
        if not ok:
            return cls(offs, M, Validity.INVALID, why)
        return cls(offs, M, Validity.VALID, "")

    def require_valid(self):
        if self.validity is not Validity.VALID:
            detail = f": {self.reason}" if self.reason else ""
            raise PatternError(f"pattern {self.offsets} is {self.validity.value}{detail}")
        return self

    def deltas(self) -> np.ndarray:
        return np.array([pack_offset(h) for h in self.offsets], dtype=np.int64)

    def as_siteset(self) -> SiteSet:
        return SiteSet.from_sites(self.offsets, self.dimension)

    def union(self, other: "BoundaryPattern") -> "BoundaryPattern":
        return BoundaryPattern.certify(self.offsets + other.offsets,
                                       max(self.max_size, other.max_size, len(set(self.offsets + other.offsets))))

    def transformed(self, perm, signs) -> "BoundaryPattern":
        """Image under a lattice symmetry (axis permutation and reflections)."""
        offs = [tuple(signs[i] * h[perm[i]] for i in range(len(h))) for h in self.offsets]
        return BoundaryPattern.certify(offs, self.max_size)


def _complement_connected(offs: np.ndarray, d: int):
    # flood fill over the bounding box of H and the origin, inflated by 2; the
    # box surface stands in for infinity
    pts = np.vstack([offs, np.zeros((1, d), dtype=np.int64)])
    lo = pts.min(0) - 2
    hi = pts.max(0) + 2
    shape = tuple(hi - lo + 1)
    free = np.ones(shape, dtype=bool)
    free[tuple((offs - lo).T)] = False
    labels, count = ndimage.label(free, structure=ndimage.generate_binary_structure(d, 1))
    if count == 1:
        return True, ""
    origin_label = labels[tuple(-lo)]
    cut = [tuple(int(c) for c in p + lo) for p in np.argwhere((labels != origin_label) & free)[:3]]
    return False, f"H separates sites such as {cut} from the origin's component"


def _as_pattern(H) -> BoundaryPattern:
    if isinstance(H, BoundaryPattern):
        return H
    return BoundaryPattern.certify(H)


# ---------------------------------------------------------------- walks

@dataclass(frozen=True, eq=False)
class WalkPath:
    dimension: int
    sites: np.ndarray
    seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.sites) - 1

    @cached_property
    def keys(self) -> np.ndarray:
        return pack(self.sites)

    def prefix(self, n: int) -> "WalkPath":
        return WalkPath(self.dimension, self.sites[: n + 1], self.seed)

    def range(self, start: int = 0, stop: int | None = None) -> SiteSet:
        """R(I) for the closed index interval [start, stop]."""
        stop = self.n if stop is None else stop
        return SiteSet(self.dimension, np.unique(self.keys[start: stop + 1]))

    def local_times(self, n: int | None = None) -> "LocalTimeField":
        n = self.n if n is None else n
        uniq, counts = kernels.count_visits(np.ascontiguousarray(self.keys[: n + 1]))
        return LocalTimeField(self.dimension, uniq, counts, n)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Sparse local-time map x -> K(n, x) over the range R(n)."""

    dimension: int
    keys: np.ndarray
    counts: np.ndarray
    total_steps: int

    def __getitem__(self, site) -> int:
        k = pack(np.array(site, dtype=np.int64)[None, :])[0]
        i = np.searchsorted(self.keys, k)
        if i < len(self.keys) and self.keys[i] == k:
            return int(self.counts[i])
        return 0

    def __len__(self):
        return len(self.keys)

    def __eq__(self, other):
        return (isinstance(other, LocalTimeField) and self.dimension == other.dimension
                and self.total_steps == other.total_steps
                and np.array_equal(self.keys, other.keys) and np.array_equal(self.counts, other.counts))

    @property
    def range(self) -> SiteSet:
        return SiteSet(self.dimension, self.keys)

    def sites(self) -> np.ndarray:
        return unpack(self.keys, self.dimension)

    def items(self):
        for s, c in zip(self.sites(), self.counts):
            yield tuple(int(v) for v in s), int(c)

    def restrict(self, sites: SiteSet) -> np.ndarray:
        """Counts at the given sites (all must be in the range)."""
        idx = np.searchsorted(self.keys, sites.keys)
        return self.counts[idx]

    def check(self):
        if int(self.counts.sum()) != self.total_steps + 1:
            raise AssertionError("local times do not sum to n + 1")
        if len(self.keys) > self.total_steps + 1 or (self.counts < 1).any():
            raise AssertionError("support is not a range")


def _draw_dirs(rng, d, size):
    return rng.integers(0, 2 * d, size=size, dtype=np.uint8)


def _sites_from_dirs(dirs, d, start):
    sites = np.empty((len(dirs) + 1, d), dtype=np.int64)
    sites[0] = start
    np.cumsum(unit_moves(d)[dirs], axis=0, out=sites[1:])
    sites[1:] += start
    return sites


def _check_extent(sites, n):
    if n >= OFFSET and (sites.min() < -OFFSET or sites.max() >= OFFSET):
        raise WalkError("walk left the 21-bit coordinate range; reduce n")


def simulate_walk(d: int, n: int, seed: int, start=None, max_steps: int = DEFAULT_MAX_STEPS):
    """Run an n-step simple random walk; returns ``(WalkPath, LocalTimeField)``."""
    _check_dim(d)
    if n < 0:
        raise WalkError("step count must be non-negative")
    if n > max_steps:
        raise WalkError(f"n = {n} exceeds the memory budget of {max_steps} steps")
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    dirs = _draw_dirs(generator(seed), d, n)
    sites = _sites_from_dirs(dirs, d, start)
    _check_extent(sites, n)
    path = WalkPath(d, sites, seed)
    return path, path.local_times()


def in_shell(sites, r: float) -> np.ndarray:
    """Membership in the inner boundary of D(0, r)."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    r2 = int(np.floor(r * r))
    n2 = (sites ** 2).sum(1)
    return (n2 <= r2) & (n2 + 2 * np.abs(sites).max(1) + 1 > r2)


def walk_until(rng, d, start, *, targets=None, avoid=None, r2=-1, max_steps=None, keep_path=False):
    """Drive a walk through ``kernels.walk_to_event`` in the shared chunk schedule.

    Returns ``(steps, code, coords, dirs)``: ``steps`` is the index of the stopping
    step (first step m >= 1 in targets/avoid/shell), ``code`` is 1/2/3 for
    target/avoid/shell, or 0 if ``max_steps`` ran out. ``dirs`` holds the consumed
    directions when ``keep_path`` is set.
    """
    coords = np.array(start, dtype=np.int64)
    key = int(pack(coords[None, :])[0])
    targets = np.zeros(0, np.int64) if targets is None else np.ascontiguousarray(targets, dtype=np.int64)
    avoid = np.zeros(0, np.int64) if avoid is None else np.ascontiguousarray(avoid, dtype=np.int64)
    skeys = step_keys(d)
    taken = 0
    kept = []
    for size in chunk_sizes():
        dirs = _draw_dirs(rng, d, size)
        if max_steps is not None and taken + size > max_steps:
            dirs = dirs[: max_steps - taken]
        i, code, key = kernels.walk_to_event(dirs, coords, skeys, key, targets, avoid, r2)
        if i >= 0:
            if keep_path:
                kept.append(dirs[: i + 1])
            return taken + i + 1, code, coords, kept
        taken += len(dirs)
        if keep_path:
            kept.append(dirs)
        if max_steps is not None and taken >= max_steps:
            return taken, 0, coords, kept


def simulate_until_exit(d: int, radius: float, seed: int, max_steps: int = DEFAULT_MAX_STEPS):
    """Walk from the origin until tau = first entry into the inner shell of D(0, r).

    Returns ``(WalkPath, tau)``; the last site of the path is the exit site.
    """
    _check_dim(d)
    if radius < 1:
        raise WalkError("radius must be at least 1")
    r2 = int(np.floor(radius * radius))
    origin = np.zeros(d, dtype=np.int64)
    steps, code, _, kept = walk_until(generator(seed), d, origin, r2=r2, max_steps=max_steps, keep_path=True)
    dirs = np.concatenate(kept) if kept else np.zeros(0, np.uint8)
    sites = _sites_from_dirs(dirs, d, origin)
    path = WalkPath(d, sites, seed)
    if code == 0:
        far = float(np.sqrt((sites ** 2).sum(1).max()))
        raise BudgetExceeded(f"no exit from D(0,{radius}) within {max_steps} steps "
                             f"(furthest distance reached {far:.1f})", partial=path)
    return path, steps


# ---------------------------------------------------------------- boundaries

def h_boundary(range_: SiteSet, H) -> SiteSet:
    """The H-boundary {y in G : y + H is disjoint from G}."""
    H = _as_pattern(H)
    H.require_valid()
    if H.dimension != range_.dimension:
        raise PatternError("pattern and range dimensions differ")
    keys = np.ascontiguousarray(range_.keys)
    mask = kernels.absent_translates(keys, H.deltas())
    return SiteSet(range_.dimension, keys[mask])


def inner_boundary(range_: SiteSet) -> SiteSet:
    """Sites of G with at least one lattice neighbour outside G."""
    keys = range_.keys
    outside = np.zeros(len(keys), dtype=bool)
    for delta in step_keys(range_.dimension):
        outside |= ~np.isin(keys + delta, keys)
    return SiteSet(range_.dimension, keys[outside])


# ---------------------------------------------------------------- torus

@dataclass(frozen=True, eq=False)
class TorusVisitRecord:
    """First hitting times T_x = inf{m >= 1 : S_m = x} and local times on Z_n^2.

    ``first_hit`` holds ``INF`` for sites not hit before the horizon.
    """

    side: int
    first_hit: np.ndarray
    local_time: np.ndarray
    steps: int
    seed: int | None = None

    @property
    def cover_time(self) -> int | None:
        if (self.first_hit == INF).any():
            return None
        return int(self.first_hit.max())

    @property
    def covered(self) -> bool:
        return self.cover_time is not None

    def uncovered_sites(self) -> list[tuple[int, int]]:
        return [tuple(int(v) for v in s) for s in np.argwhere(self.first_hit == INF)]

    def __eq__(self, other):
        return (isinstance(other, TorusVisitRecord) and self.side == other.side and self.steps == other.steps
                and np.array_equal(self.first_hit, other.first_hit)
                and np.array_equal(self.local_time, other.local_time))


def simulate_torus_walk(n: int, seed: int, horizon: int | None = None) -> TorusVisitRecord:
    """Walk on Z_n^2 from (0, 0) until every site (origin included) has T_x finite."""
    if n < 2:
        raise WalkError("torus side must be at least 2")
    first = np.full(n * n, -1, dtype=np.int64)
    lt = np.zeros(n * n, dtype=np.int64)
    lt[0] = 1
    state = np.array([0, 0, 0, n * n], dtype=np.int64)
    rng = generator(seed)
    for size in chunk_sizes():
        dirs = _draw_dirs(rng, 2, size)
        if horizon is not None:
            dirs = dirs[: max(0, horizon - int(state[2]))]
        hit = kernels.torus_cover(dirs, state, first, lt, n) if len(dirs) else -1
        if hit >= 0:
            break
        if horizon is not None and state[2] >= horizon:
            first[first < 0] = INF
            rec = TorusVisitRecord(n, first.reshape(n, n), lt.reshape(n, n), int(state[2]), seed)
            raise HorizonReached(f"{int(state[3])} sites uncovered after {horizon} steps", partial=rec)
    return TorusVisitRecord(n, first.reshape(n, n), lt.reshape(n, n), int(state[2]), seed)


# ---------------------------------------------------------------- serialization

_WLK_HEADER = struct.Struct("<4sHBBQQQ")
WLK_VERSION = 1


def dump_walk(fp, field_: LocalTimeField, path: WalkPath | None = None, seed: int | None = None) -> None:
    """Write the WLK1 container: header (d, n, seed), optional path, then the field."""
    d = field_.dimension
    if seed is None:
        seed = (path.seed if path is not None and path.seed is not None else 0)
    flags = 1 if path is not None else 0
    fp.write(_WLK_HEADER.pack(b"WLK1", WLK_VERSION, d, flags, field_.total_steps, seed & (2 ** 64 - 1), len(field_)))
    if path is not None:
        fp.write(np.ascontiguousarray(path.sites, dtype="<i4").tobytes())
    fp.write(np.ascontiguousarray(field_.sites(), dtype="<i4").tobytes())
    fp.write(np.ascontiguousarray(field_.counts, dtype="<i8").tobytes())


def load_walk(fp):
    """Inverse of :func:`dump_walk`; returns ``(field, path_or_None, seed)``."""
    raw = fp.read(_WLK_HEADER.size)
    magic, version, d, flags, n, seed, m = _WLK_HEADER.unpack(raw)
    if magic != b"WLK1":
        raise ValueError(f"not a WLK1 container (magic {magic!r})")
    if version != WLK_VERSION:
        raise ValueError(f"unsupported WLK1 version {version}")
    path = None
    if flags & 1:
        sites = np.frombuffer(fp.read(4 * d * (n + 1)), dtype="<i4").reshape(n + 1, d).astype(np.int64)
        path = WalkPath(d, sites, seed)
    sites = np.frombuffer(fp.read(4 * d * m), dtype="<i4").reshape(m, d).astype(np.int64)
    counts = np.frombuffer(fp.read(8 * m), dtype="<i8").astype(np.int64)
    keys = pack(sites)
    order = np.argsort(keys)
    return LocalTimeField(d, keys[order], counts[order], int(n)), path, seed


def field_to_csv(field_: LocalTimeField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(field_.dimension)] + ["count"])
    for s, c in field_.items():
        w.writerow([*s, c])
    return buf.getvalue()


def field_from_csv(text: str, total_steps: int | None = None) -> LocalTimeField:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    arr = np.array([[int(v) for v in r] for r in body], dtype=np.int64).reshape(-1, d + 1)
    keys = pack(arr[:, :d])
    order = np.argsort(keys)
    counts = arr[order, d]
    n = int(counts.sum()) - 1 if total_steps is None else total_steps
    return LocalTimeField(d, keys[order], counts, n)


def save_walk(path_like, field_, path=None, seed=None):
    with open(Path(path_like), "wb") as fp:
        dump_walk(fp, field_, path, seed)
