"""Favourite points, boundary favourites, thresholded point sets and late points.

Thresholds of the form ``K >= c`` with real ``c`` are evaluated as the integer
comparison ``K >= ceil(c)``, so no float comparison decides membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import (LocalTimeField, SiteSet, TorusVisitRecord, WalkPath, _as_pattern,
                      simulate_torus_walk, step_keys)
from .rng import replicate_seed

__all__ = ["FavoriteReport", "ThresholdCount", "TorusVisitRecord", "EmptyBoundaryError",
           "UncoveredError", "favorite", "boundary_favorite", "favorite_touches_boundary",
           "theta_count", "tilde_theta", "late_points", "cover_statistics", "cover_trend",
           "psi_set", "FAVORITE_COLUMNS", "THRESHOLD_COLUMNS", "COVER_COLUMNS", "LATE_CONSTANT"]

LATE_CONSTANT = 4 / math.pi

FAVORITE_COLUMNS = ("n", "seed", "max", "n_argmax", "normalized")
THRESHOLD_COLUMNS = ("n", "seed", "param", "count")
COVER_COLUMNS = ("n", "seed", "cover_time", "normalized_max")


class EmptyBoundaryError(ValueError):
    pass


class UncoveredError(ValueError):
    pass


@dataclass(frozen=True)
class FavoriteReport:
    max_value: int
    argmax_sites: SiteSet
    normalized: float
    restriction: str = "whole-range"
    n: int = 0
    seed: int | None = None

    def __post_init__(self):
        if len(self.argmax_sites) == 0:
            raise ValueError("argmax set is empty")

    def row(self) -> tuple:
        return (self.n, self.seed, self.max_value, len(self.argmax_sites), self.normalized)


@dataclass(frozen=True)
class ThresholdCount:
    count: int
    threshold: float
    params: dict = field(default_factory=dict)
    candidates: int = 0

    def row(self, param_name: str) -> tuple:
        return (self.params.get("n"), self.params.get("seed"), self.params.get(param_name), self.count)


def favorite_scale(n: int, d: int) -> float:
    """Growth scale of the maximal local time: sqrt(n), (log n)^2 or log n."""
    if n < 2:
        return math.nan
    if d == 1:
        return math.sqrt(n)
    if d == 2:
        return math.log(n) ** 2
    return math.log(n)


def _ceil_threshold(value: float) -> int:
    return max(0, math.ceil(value))


def _argmax(field_: LocalTimeField, keys: np.ndarray, counts: np.ndarray, label: str) -> FavoriteReport:
    top = int(counts.max())
    sites = SiteSet(field_.dimension, keys[counts == top])
    scale = favorite_scale(field_.total_steps, field_.dimension)
    return FavoriteReport(top, sites, top / scale if scale == scale else math.nan, label, field_.total_steps)


def favorite(field_: LocalTimeField) -> FavoriteReport:
    """Maximal local time over the range with the full (untied) argmax set."""
    if len(field_) == 0:
        raise ValueError("field is empty")
    return _argmax(field_, field_.keys, field_.counts, "whole-range")


def _boundary_counts(field_, H):
    H = _as_pattern(H).require_valid()
    if H.dimension != field_.dimension:
        raise ValueError("pattern and field dimensions differ")
    mask = kernels.absent_translates(np.ascontiguousarray(field_.keys), H.deltas())
    return H, field_.keys[mask], field_.counts[mask]


def boundary_favorite(field_: LocalTimeField, H) -> FavoriteReport:
    """M_H(n): the maximal local time over the H-boundary of the range."""
    H, keys, counts = _boundary_counts(field_, H)
    if len(keys) == 0:
        raise EmptyBoundaryError("the H-boundary of this range is empty")
    return _argmax(field_, keys, counts, f"h-boundary({list(H.offsets)})")


def favorite_touches_boundary(field_: LocalTimeField) -> bool:
    """Whether some favourite site has a lattice neighbour outside the range."""
    top = field_.keys[field_.counts == field_.counts.max()]
    for delta in step_keys(field_.dimension):
        probe = top + delta
        pos = np.searchsorted(field_.keys, probe)
        pos[pos == len(field_.keys)] = 0
        if (field_.keys[pos] != probe).any():
            return True
    return False


def theta_count(field_: LocalTimeField, H, delta: float, beta: float) -> ThresholdCount:
    """|{x in the H-boundary : K(n, x) >= beta * delta * log n}| with ``beta`` = beta_d(H)."""
    if not 0 < delta < 1:
        raise ValueError("delta must satisfy 0 < delta < 1")
    if not beta > 0:
        raise ValueError("beta must be positive")
    H, keys, counts = _boundary_counts(field_, H)
    if len(keys) == 0:
        raise EmptyBoundaryError("the H-boundary of this range is empty")
    n = field_.total_steps
    level = beta * delta * math.log(n) if n >= 1 else 0.0
    cut = _ceil_threshold(level)
    return ThresholdCount(int((counts >= cut).sum()), level,
                          {"n": n, "delta": delta, "beta": beta, "H": [list(h) for h in H.offsets]},
                          len(keys))


def visit_target(beta: float, n: int) -> int:
    """p = ceil(beta * log(n / 2)), at least one visit."""
    if n < 1:
        return 1
    return max(1, math.ceil(beta * math.log(n / 2)))


def tilde_theta(path: WalkPath, beta: float, H, n: int | None = None) -> ThresholdCount:
    """Sites whose p-th visit, p = ceil(beta log(n/2)), happens at a time when the
    site lies in the H-boundary of the range visited so far (visit step included).

    The walk is streamed once; memory is proportional to the range.
    """
    H = _as_pattern(H).require_valid()
    n = path.n if n is None else n
    p = visit_target(beta, n)
    keys = np.ascontiguousarray(path.keys[: n + 1])
    count = int(kernels.tilde_theta(keys, p, H.deltas()))
    return ThresholdCount(count, float(p), {"n": n, "beta": beta, "p": p, "seed": path.seed,
                                            "H": [list(h) for h in H.offsets]})


def late_threshold(n: int, alpha: float) -> int:
    return _ceil_threshold(LATE_CONSTANT * alpha * (n * math.log(n)) ** 2)


def late_points(record: TorusVisitRecord, alpha: float) -> tuple[ThresholdCount, SiteSet]:
    """The alpha-late points {x : T_x >= (4 alpha / pi) (n log n)^2} of a covered torus."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must satisfy 0 < alpha < 1")
    if not record.covered:
        raise UncoveredError(f"{len(record.uncovered_sites())} torus sites were never hit")
    n = record.side
    cut = late_threshold(n, alpha)
    members = np.argwhere(record.first_hit >= cut)
    sites = SiteSet.from_sites(members, 2) if len(members) else SiteSet(2, np.zeros(0, np.int64))
    return (ThresholdCount(len(members), LATE_CONSTANT * alpha * (n * math.log(n)) ** 2,
                           {"n": n, "alpha": alpha, "seed": record.seed}, n * n), sites)


@dataclass(frozen=True)
class CoverStatistics:
    side: int
    seeds: tuple
    cover_times: np.ndarray
    normalized: np.ndarray

    @property
    def median(self) -> float:
        return float(np.median(self.normalized))

    @property
    def iqr(self) -> float:
        q1, q3 = np.percentile(self.normalized, [25, 75])
        return float(q3 - q1)

    def rows(self):
        return [(self.side, s, int(c), float(v))
                for s, c, v in zip(self.seeds, self.cover_times, self.normalized)]


def cover_statistics(side: int, replicates: int, seed: int, horizon: int | None = None) -> CoverStatistics:
    """max_x T_x / (n log n)^2 over independent torus walks."""
    if side < 4:
        raise ValueError("torus side must be at least 4")
    if replicates <= 0:
        raise ValueError("replicates must be positive")
    seeds = tuple(replicate_seed(seed, "cover", side, r) for r in range(replicates))
    times = np.array([simulate_torus_walk(side, s, horizon).cover_time for s in seeds], dtype=np.int64)
    return CoverStatistics(side, seeds, times, times / (side * math.log(side)) ** 2)


def cover_trend(sides, replicates: int, seed: int) -> dict:
    """Medians along a grid of sides and whether their distance to 4/pi is nonincreasing."""
    stats = [cover_statistics(n, replicates, seed) for n in sorted(sides)]
    dist = [abs(s.median - LATE_CONSTANT) for s in stats]
    return {"sides": [s.side for s in stats], "medians": [s.median for s in stats],
            "iqr": [s.iqr for s in stats], "distance": dist, "target": LATE_CONSTANT,
            "nonincreasing": all(b <= a for a, b in zip(dist, dist[1:])), "stats": stats}


def psi_threshold(n: float, alpha: float) -> int:
    return _ceil_threshold(LATE_CONSTANT * alpha * math.log(n) ** 2)


def psi_set(path: WalkPath, radius: float, alpha: float) -> tuple[ThresholdCount, SiteSet]:
    """Psi_n(alpha) = {x : K(tau_n, x) >= ceil((4 alpha / pi) (log n)^2)} for a planar
    walk stopped at its exit time from D(0, n)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must satisfy 0 < alpha < 1")
    if path.dimension != 2:
        raise ValueError("psi_set is planar")
    field_ = path.local_times()
    cut = psi_threshold(radius, alpha)
    keys = field_.keys[field_.counts >= cut]
    return (ThresholdCount(len(keys), LATE_CONSTANT * alpha * math.log(radius) ** 2,
                           {"n": radius, "alpha": alpha, "seed": path.seed, "cut": cut}, len(field_)),
            SiteSet(2, keys))
