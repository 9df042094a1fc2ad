"""Clustering exponents of random point sets.

Q_j counts ordered j-tuples (repetition allowed) of a point set whose points are
pairwise within distance n^beta. Its growth exponent in n is fitted on a log-log
scale and compared with the closed-form curves rho2 and rho2_hat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import linregress

from .gff import high_points, sample_gff
from .lattice import SiteSet, pack, simulate_torus_walk, simulate_until_exit
from .points import late_points, psi_set
from .rng import replicate_seed

PAIRS_MAX_SITES = 1000
CAVEAT = ("finite-n trend data: fitted slopes estimate exponents defined by limits "
          "that may not exist; they are not a verification of any limit")
EXPERIMENT_COLUMNS = ("source", "alpha", "beta", "n", "replicate", "count")
DEFAULT_METRIC = {"psi": "euclidean", "late": "torus-euclidean", "high": "euclidean"}


@dataclass(frozen=True)
class TupleCount:
    j: int
    beta: float
    n: float
    count: int
    size: int = 0


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    std_error: float
    points: list = field(default_factory=list)


# ---------------------------------------------------------------- counting

def _as_sites(G) -> np.ndarray:
    if isinstance(G, SiteSet):
        return G.sites()
    arr = np.asarray(G, dtype=np.int64)
    return arr.reshape(len(arr), -1) if arr.size else np.zeros((0, 2), np.int64)


def _sq_dist(a, b, side):
    diff = np.abs(a - b)
    if side is not None:
        diff = np.minimum(diff, side - diff)
    return (diff * diff).sum(-1)


def _pairs_adjacency(sites, r2, side) -> sp.csr_matrix:
    d2 = _sq_dist(sites[:, None, :], sites[None, :, :], side)
    return sp.csr_matrix(d2 <= r2)


def _grid_adjacency(sites, radius, r2, side) -> sp.csr_matrix | None:
    """Pairs within ``radius`` from a grid of cells at least ``radius`` wide."""
    N, d = sites.shape
    if side is None:
        width = max(radius, 1.0)
        cells = np.floor(sites / width).astype(np.int64)
        per_axis = None
    else:
        per_axis = int(side // max(radius, 1.0))
        if per_axis < 3:
            return None
        cells = (np.mod(sites, side) * per_axis) // side
    cell_keys = pack(cells)
    order = np.argsort(cell_keys, kind="stable")
    skeys = cell_keys[order]
    rows, cols = [], []
    for off in np.stack(np.meshgrid(*([np.arange(-1, 2)] * d), indexing="ij"), -1).reshape(-1, d):
        nb = cells + off
        if per_axis is not None:
            nb = np.mod(nb, per_axis)
        nkeys = pack(nb)
        lo = np.searchsorted(skeys, nkeys, "left")
        hi = np.searchsorted(skeys, nkeys, "right")
        counts = hi - lo
        i = np.repeat(np.arange(N), counts)
        start = np.repeat(lo, counts)
        within = np.arange(len(i)) - np.repeat(np.cumsum(counts) - counts, counts)
        j = order[start + within]
        keep = _sq_dist(sites[i], sites[j], side) <= r2
        rows.append(i[keep])
        cols.append(j[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(N, N))


def tuple_count(G, j: int, beta: float, n: float, metric: str = "euclidean",
                side: int | None = None, method: str = "auto") -> TupleCount:
    """Ordered j-tuples of G (with repetition) whose points are pairwise within n^beta.

    ``method`` is "grid" (cells of width n^beta), "pairs" (all pairs) or "auto",
    which uses all pairs below 1000 sites. The torus metric needs ``side``.
    """
    if j not in (2, 3):
        raise ValueError("only j = 2 and j = 3 are supported")
    if metric not in ("euclidean", "torus-euclidean"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "torus-euclidean" and side is None:
        raise ValueError("the torus metric needs the torus side")
    sites = _as_sites(G)
    torus_side = side if metric == "torus-euclidean" else None
    if len(sites) == 0:
        return TupleCount(j, beta, n, 0, 0)
    radius = float(n) ** beta
    r2 = radius * radius
    A = None
    if method == "grid" or (method == "auto" and len(sites) >= PAIRS_MAX_SITES):
        A = _grid_adjacency(sites, radius, r2, torus_side)
    if A is None:
        A = _pairs_adjacency(sites, r2, torus_side)
    A = A.astype(np.int64)
    if j == 2:
        count = int(A.sum())
    else:
        count = int(A.multiply(A @ A).sum())
    return TupleCount(j, beta, n, count, len(sites))


# ---------------------------------------------------------------- reference curves

def _check_domain(alpha, beta):
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError("rho curves need 0 < alpha < 1 and 0 < beta < 1")


def rho2_branches(alpha: float, beta: float) -> tuple[float, float]:
    """(small-beta branch, large-beta branch) of rho2."""
    s = 1 - math.sqrt(alpha)
    return 2 + 2 * beta - 4 * alpha / (2 - beta), 8 * s - 4 * s * s / beta


def rho2_hat_branches(alpha: float, beta: float) -> tuple[float, float]:
    """(small-beta branch, constant branch) of rho2_hat."""
    return 2 + 2 * beta - 4 * alpha / (2 - beta), 6 - 4 * math.sqrt(2 * alpha)


def rho2_breakpoint(alpha: float) -> float:
    return 2 * (1 - math.sqrt(alpha))


def rho2_hat_breakpoint(alpha: float) -> float:
    return 2 - math.sqrt(2 * alpha)


def rho2(alpha: float, beta: float) -> float:
    _check_domain(alpha, beta)
    small, large = rho2_branches(alpha, beta)
    return small if beta <= rho2_breakpoint(alpha) else large


def rho2_hat(alpha: float, beta: float) -> float:
    _check_domain(alpha, beta)
    small, const = rho2_hat_branches(alpha, beta)
    return small if beta <= rho2_hat_breakpoint(alpha) else const


# ---------------------------------------------------------------- fitting

def fit_exponent(points) -> ExponentFit:
    """Least-squares slope of log(count) against log(n)."""
    pts = [(float(n), float(c)) for n, c in points]
    if len({n for n, _ in pts}) < 3:
        raise ValueError("at least three distinct n values are needed")
    if any(c <= 0 for _, c in pts):
        raise ValueError("zero counts cannot be fitted on a log scale; widen beta or use larger n")
    if any(n <= 0 for n, _ in pts):
        raise ValueError("n must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([c for _, c in pts])
    res = linregress(x, y)
    se = float(res.stderr) if len(pts) > 2 and np.isfinite(res.stderr) else 0.0
    return ExponentFit(float(res.slope), float(res.intercept), se, list(zip(x.tolist(), y.tolist())))


# ---------------------------------------------------------------- experiments

def source_points(source: str, alpha: float, n: int, seed: int) -> SiteSet:
    """One random point set: alpha-favourite, alpha-late or alpha-high points at scale n."""
    if source == "psi":
        path, _ = simulate_until_exit(2, n, seed)
        return psi_set(path, n, alpha)[1]
    if source == "late":
        return late_points(simulate_torus_walk(n, seed), alpha)[1]
    if source == "high":
        return high_points(sample_gff(n, seed), alpha).sites
    raise ValueError(f"unknown source {source!r}; expected psi, late or high")


def _safe_fit(points):
    try:
        return fit_exponent(points)
    except ValueError as exc:
        return str(exc)


def exponent_experiment(source: str, alpha: float, beta: float, n_grid, replicates: int, seed: int,
                        metric: str | None = None) -> dict:
    """Fitted Q2-hat (slope of mean counts) and Q2 (slope of median counts) with rho references."""
    _check_domain(alpha, beta)
    if replicates <= 0:
        raise ValueError("replicates must be positive")
    n_grid = sorted(int(n) for n in n_grid)
    metric = metric or DEFAULT_METRIC.get(source, "euclidean")
    rows = []
    counts = np.zeros((len(n_grid), replicates), dtype=np.int64)
    for a, n in enumerate(n_grid):
        for r in range(replicates):
            pts = source_points(source, alpha, n, replicate_seed(seed, "exponents", source, n, r))
            c = tuple_count(pts, 2, beta, n, metric, side=n).count
            counts[a, r] = c
            rows.append((source, alpha, beta, n, r, c))
    mean_fit = _safe_fit(zip(n_grid, counts.mean(1)))
    median_fit = _safe_fit(zip(n_grid, np.median(counts, 1)))
    per_rep = [_safe_fit(zip(n_grid, counts[:, r])) for r in range(replicates)]
    slopes = [f.slope for f in per_rep if isinstance(f, ExponentFit)]

    def describe(fit):
        if isinstance(fit, ExponentFit):
            return {"slope": fit.slope, "intercept": fit.intercept, "std_error": fit.std_error}
        return {"slope": None, "error": fit}

    return {"source": source, "alpha": alpha, "beta": beta, "metric": metric, "n_grid": n_grid,
            "replicates": replicates, "seed": seed,
            "q2_hat": describe(mean_fit), "q2": describe(median_fit),
            "q2_replicate_median": float(np.median(slopes)) if slopes else None,
            "rho2": rho2(alpha, beta), "rho2_hat": rho2_hat(alpha, beta),
            "mean_counts": counts.mean(1).tolist(), "median_counts": np.median(counts, 1).tolist(),
            "caveat": CAVEAT, "rows": rows}
