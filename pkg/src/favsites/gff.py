"""Discrete Gaussian free fields, their high points, and the Ray-Knight check.

Box fields live on the n x n square with zero boundary; their covariance is the
Green function of the simple walk killed on the box boundary. Graph fields are
pinned to zero at the graph origin and have covariance g(x, y), the expected
weight-normalised local time at y before hitting the origin from x.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.fft import dstn
from scipy.stats import skew

from . import kernels
from .graphs import WeightedGraph, box, box_boundary
from .hitting import GreenMatrix, green_matrix
from .lattice import BudgetExceeded, SiteSet
from .rng import chunk_sizes, generator, replicate_seed

MAX_CONSTANT = 2 * math.sqrt(2 / math.pi)
HIGH_CONSTANT = 4 / math.pi
DENSE_MAX_SITES = 10_000
DEFAULT_PERMUTATIONS = 1000


# ---------------------------------------------------------------- types

@dataclass(frozen=True, eq=False)
class GaussianField:
    """Field values on an ordered site list; killed/boundary sites hold exact zeros."""

    sites: np.ndarray
    values: np.ndarray
    covariance_ref: str
    seed: int | None = None
    side: int | None = None

    def __post_init__(self):
        if len(self.sites) != len(self.values):
            raise ValueError("one value per site is required")

    def as_grid(self) -> np.ndarray:
        if self.side is None:
            raise ValueError("not a box field")
        return self.values.reshape(self.side, self.side)

    def __eq__(self, other):
        return (isinstance(other, GaussianField) and self.covariance_ref == other.covariance_ref
                and np.array_equal(self.sites, other.sites) and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class ContinuousWalkRecord:
    graph: WeightedGraph
    local_time: np.ndarray
    stop_time: float
    seed: int | None = None
    jumps: int = 0


@dataclass(frozen=True)
class HighPointSet:
    alpha: float
    sites: SiteSet
    threshold: float

    def __len__(self):
        return len(self.sites)


# ---------------------------------------------------------------- box sampler

def _box_sites(n: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.stack([i.ravel(), j.ravel()], 1).astype(np.int64)


@lru_cache(maxsize=4)
def _box_precision_factor(n: int) -> np.ndarray:
    """Lower Cholesky factor of I - P on the (n-2)^2 interior sites."""
    m = n - 2
    eye = np.eye(m)
    lap1 = 2 * eye - np.eye(m, k=1) - np.eye(m, k=-1)
    M = 0.25 * (np.kron(lap1, eye) + np.kron(eye, lap1))
    return scipy.linalg.cholesky(M, lower=True)


@lru_cache(maxsize=8)
def _box_spectrum(n: int) -> np.ndarray:
    m = n - 2
    c = np.cos(np.pi * np.arange(1, m + 1) / (m + 1))
    return 1.0 - 0.5 * (c[:, None] + c[None, :])


def box_method(n: int) -> str:
    return "dense-cholesky" if (n - 2) ** 2 <= DENSE_MAX_SITES else "sine-transform"


def _interior_samples(n: int, z: np.ndarray) -> np.ndarray:
    """Map standard normals z of shape (k, m, m) to zero-boundary box fields."""
    m = n - 2
    if box_method(n) == "dense-cholesky":
        L = _box_precision_factor(n)
        # (I - P) = L L^T, so L^{-T} z has covariance (I - P)^{-1} = G
        flat = scipy.linalg.solve_triangular(L.T, z.reshape(len(z), m * m).T, lower=False).T
        return flat.reshape(len(z), m, m)
    # eigenbasis of I - P is the orthonormal type-I sine transform
    return dstn(z / np.sqrt(_box_spectrum(n)), type=1, axes=(1, 2), norm="ortho")


def sample_gff_batch(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent box fields, shape (count, n, n), boundary exactly zero."""
    if n < 3:
        raise ValueError("box side must be at least 3")
    if count <= 0:
        raise ValueError("count must be positive")
    m = n - 2
    out = np.zeros((count, n, n))
    rng = generator(seed)
    step = max(1, 2_000_000 // (m * m))
    for lo in range(0, count, step):
        k = min(step, count - lo)
        out[lo: lo + k, 1:-1, 1:-1] = _interior_samples(n, rng.standard_normal((k, m, m)))
    return out


def sample_gff(n: int, seed: int) -> GaussianField:
    """Zero-boundary GFF on the n x n box."""
    values = sample_gff_batch(n, 1, seed)[0]
    return GaussianField(_box_sites(n), values.ravel(), f"box({n})/{box_method(n)}", seed, n)


def box_green(n: int) -> GreenMatrix:
    """Green matrix of the walk on the n x n box killed on its boundary."""
    return green_matrix(box(n), box_boundary(n))


# ---------------------------------------------------------------- high points

def high_threshold(n: float, alpha: float) -> float:
    return HIGH_CONSTANT * alpha * math.log(n) ** 2


def high_points(field_: GaussianField, alpha: float, n: float | None = None) -> HighPointSet:
    """{x : phi(x)^2 / 2 >= (4 alpha / pi) (log n)^2}; both signs of phi count."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must satisfy 0 < alpha < 1")
    n = field_.side if n is None else n
    if n is None:
        raise ValueError("scale n is required for a non-box field")
    level = high_threshold(n, alpha)
    hit = 0.5 * field_.values ** 2 >= level
    sites = field_.sites[hit]
    return HighPointSet(alpha, SiteSet.from_sites(sites, field_.sites.shape[1]) if len(sites)
                        else SiteSet(field_.sites.shape[1], np.zeros(0, np.int64)), level)


def max_trend(sides, samples: int, seed: int) -> dict:
    """Median of max phi / log n per side and whether its distance to 2 sqrt(2/pi) shrinks."""
    sides = sorted(sides)
    medians, per_side = [], {}
    for n in sides:
        maxima = []
        left = samples
        block = 0
        while left:
            k = min(left, max(1, 4_000_000 // (n * n)))
            fields = sample_gff_batch(n, k, replicate_seed(seed, "gff-max", n, block))
            maxima.append(fields.reshape(k, -1).max(1) / math.log(n))
            left -= k
            block += 1
        vals = np.concatenate(maxima)
        per_side[n] = vals
        medians.append(float(np.median(vals)))
    dist = [abs(m - MAX_CONSTANT) for m in medians]
    return {"sides": sides, "medians": medians, "distance": dist, "target": MAX_CONSTANT,
            "ratio_last": medians[-1] / MAX_CONSTANT,
            "nonincreasing": all(b <= a for a, b in zip(dist, dist[1:])), "samples": per_side}


# ---------------------------------------------------------------- continuous-time walk

def simulate_inverse_local_time(graph: WeightedGraph, t: float, seed: int,
                                max_jumps: int = 50_000_000) -> ContinuousWalkRecord:
    """Run the unit-rate walk from the origin until K~(s, origin) first exceeds t.

    K~(s, x) is occupation time divided by lam_x. The returned local times are
    those at the stopping time, so the origin carries exactly t.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not graph.is_connected():
        raise ValueError("graph must be connected")
    indptr, indices, cum = graph.jump_table()
    lam = graph.lam
    origin = graph.origin
    occ = np.zeros(len(graph))
    cur = np.array([origin], dtype=np.int64)
    budget = t * lam[origin]
    rng = generator(seed)
    jumps = 0
    for size in chunk_sizes():
        holds = rng.standard_exponential(size)
        unifs = rng.random(size)
        i = kernels.ctime_walk(holds, unifs, cur, occ, indptr, indices, cum, origin, budget)
        if i >= 0:
            jumps += i
            lt = occ / lam
            lt[origin] = t
            return ContinuousWalkRecord(graph, lt, t, seed, jumps)
        jumps += size
        if jumps >= max_jumps:
            raise BudgetExceeded(f"origin local time {occ[origin] / lam[origin]:.3g} < t after {jumps} jumps",
                                 partial=occ / lam)


def _graph_green(graph: WeightedGraph):
    G = green_matrix(graph, [graph.sites[graph.origin]])
    free = G.free
    L = scipy.linalg.cholesky(G.entries[np.ix_(free, free)], lower=True)
    return G, free, L


def sample_graph_gff(graph: WeightedGraph, count: int, seed: int, factor=None) -> np.ndarray:
    """``count`` fields pinned to zero at the origin, shape (count, |V|)."""
    G, free, L = _graph_green(graph) if factor is None else factor
    out = np.zeros((count, len(graph)))
    out[:, free] = generator(seed).standard_normal((count, len(free))) @ L.T
    return out


def local_time_samples(graph: WeightedGraph, t: float, replicates: int, seed: int, label="walk") -> np.ndarray:
    return np.stack([simulate_inverse_local_time(graph, t, replicate_seed(seed, label, r)).local_time
                     for r in range(replicates)])


def ks_permutation_test(a: np.ndarray, b: np.ndarray, permutations: int = DEFAULT_PERMUTATIONS,
                        rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Two-sample sup-distance between empirical CDFs and its permutation p-value."""
    rng = generator(0) if rng is None else rng
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    srt = pooled[order]
    ends = np.flatnonzero(np.r_[srt[1:] != srt[:-1], True])
    na, nb = len(a), len(b)
    labels = np.r_[np.ones(na), np.zeros(nb)]

    def stat(lab):
        ca = np.cumsum(lab)[ends]
        cb = (ends + 1) - ca
        return np.abs(ca / na - cb / nb).max()

    observed = stat(labels[order])
    exceed = sum(stat(rng.permutation(labels)) >= observed - 1e-12 for _ in range(permutations))
    return float(observed), (exceed + 1) / (permutations + 1)


def ray_knight_check(graph: WeightedGraph, t: float, replicates: int, seed: int,
                     permutations: int = DEFAULT_PERMUTATIONS, swap_streams: bool = False) -> dict:
    """Compare K~(tau_t, x) + phi(x)^2 / 2 with (phi'(x) + sqrt(2t))^2 / 2 site by site.

    phi, phi' are independent pinned fields, independent of the walk. For each
    non-origin site the report gives means and second moments of both sides with
    standard errors, the exact values g/2 + t and (3g^2 + 12gt + 4t^2)/4, and a
    permutation p-value of the sup-distance between the two empirical laws,
    Bonferroni-corrected over the sites.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if len(graph) > 200:
        raise ValueError("graph too large for the exact Green matrix (> 200 sites)")
    factor = _graph_green(graph)
    G = factor[0]
    lhs_label, rhs_label = ("field-rhs", "field-lhs") if swap_streams else ("field-lhs", "field-rhs")
    lt = local_time_samples(graph, t, replicates, seed)
    phi = sample_graph_gff(graph, replicates, replicate_seed(seed, lhs_label), factor)
    psi = sample_graph_gff(graph, replicates, replicate_seed(seed, rhs_label), factor)
    lhs = lt + 0.5 * phi ** 2
    rhs = 0.5 * (psi + math.sqrt(2 * t)) ** 2
    sites = [i for i in range(len(graph)) if i != graph.origin]
    perm_rng = generator(replicate_seed(seed, "permutation"))
    rows = []
    for i in sites:
        g = float(G.entries[i, i])
        a, b = lhs[:, i], rhs[:, i]
        se = math.sqrt(a.var(ddof=1) / replicates + b.var(ddof=1) / replicates)
        m2a, m2b = (a ** 2).mean(), (b ** 2).mean()
        se2 = math.sqrt((a ** 2).var(ddof=1) / replicates + (b ** 2).var(ddof=1) / replicates)
        dist, p = ks_permutation_test(a, b, permutations, perm_rng)
        rows.append({"site": _label(graph.sites[i]), "g": g,
                     "mean_lhs": float(a.mean()), "mean_rhs": float(b.mean()),
                     "mean_exact": 0.5 * g + t, "se": se,
                     "mean_z": float((a.mean() - b.mean()) / se),
                     "m2_lhs": float(m2a), "m2_rhs": float(m2b),
                     "m2_exact": 0.25 * (3 * g * g + 12 * g * t + 4 * t * t), "m2_se": se2,
                     "m2_z": float((m2a - m2b) / se2), "ks": dist,
                     "p_value": min(1.0, p * len(sites)), "p_raw": p})
    ok = all(abs(r["mean_z"]) < 4 and abs(r["m2_z"]) < 4 and r["p_value"] > 0.01 for r in rows)
    origin_lt = lt[:, graph.origin]
    return {"graph": graph.name, "t": t, "replicates": replicates, "seed": seed,
            "permutations": permutations, "sites": rows, "within_band": ok,
            "origin_exact": bool((origin_lt == t).all())}


def clt_rescaling(graph: WeightedGraph, t_list, replicates: int, seed: int) -> dict:
    """Per-t moments of (K~(tau_t, x) - t) / sqrt(2t) against the pinned-field variance g(x, x).

    The mean is 0 and the variance is g(x, x) at every t (both exact); the
    approach to a Gaussian law shows in the skewness, which decays like t^(-1/2).
    """
    t_list = [float(t) for t in t_list]
    if any(t <= 0 for t in t_list) or t_list != sorted(t_list):
        raise ValueError("t_list must be positive and increasing")
    G = green_matrix(graph, [graph.sites[graph.origin]])
    sites = [i for i in range(len(graph)) if i != graph.origin]
    g = np.array([G.entries[i, i] for i in sites])
    out = []
    for t in t_list:
        lt = local_time_samples(graph, t, replicates, replicate_seed(seed, "clt", t))[:, sites]
        z = (lt - t) / math.sqrt(2 * t)
        mean = z.mean(0)
        var = z.var(0, ddof=1)
        se = np.sqrt(var / replicates)
        centred = z - mean
        var_se = np.sqrt(((centred ** 2 - var) ** 2).mean(0) / replicates)
        out.append({"t": t, "mean": mean.tolist(), "mean_se": se.tolist(),
                    "mean_z": (mean / se).tolist(), "variance": var.tolist(), "variance_se": var_se.tolist(),
                    "g": g.tolist(), "variance_gap": float(np.median(np.abs(var - g))),
                    "relative_gap": (np.abs(var - g) / g).tolist(),
                    "skewness": skew(z, axis=0).tolist()})
    return {"graph": graph.name, "sites": [_label(graph.sites[i]) for i in sites], "replicates": replicates,
            "seed": seed, "per_t": out}


def _label(site):
    return list(site) if isinstance(site, tuple) else site


# ---------------------------------------------------------------- serialization

_GFF_HEADER = struct.Struct("<4sHHIIQ")
GFF_VERSION = 1


def dump_field(fp, field_: GaussianField) -> None:
    """Binary container: magic GFF1, version, d, side (0 if none), site count, seed."""
    sites = np.ascontiguousarray(field_.sites, dtype="<i4")
    ref = field_.covariance_ref.encode()
    fp.write(_GFF_HEADER.pack(b"GFF1", GFF_VERSION, sites.shape[1], field_.side or 0, len(sites),
                              field_.seed or 0))
    fp.write(struct.pack("<H", len(ref)) + ref)
    fp.write(sites.tobytes())
    fp.write(np.ascontiguousarray(field_.values, dtype="<f8").tobytes())


def load_field(fp) -> GaussianField:
    magic, version, d, side, count, seed = _GFF_HEADER.unpack(fp.read(_GFF_HEADER.size))
    if magic != b"GFF1":
        raise ValueError("not a GFF1 container")
    if version != GFF_VERSION:
        raise ValueError(f"unsupported GFF1 version {version}")
    (nref,) = struct.unpack("<H", fp.read(2))
    ref = fp.read(nref).decode()
    sites = np.frombuffer(fp.read(4 * d * count), dtype="<i4").reshape(count, d).astype(np.int64)
    values = np.frombuffer(fp.read(8 * count), dtype="<f8").copy()
    return GaussianField(sites, values, ref, seed, side or None)


def field_to_csv(field_: GaussianField) -> str:
    buf = io.StringIO()
    d = field_.sites.shape[1]
    buf.write(",".join(["x", "y", "z"][:d] + ["value"]) + "\n")
    for s, v in zip(field_.sites, field_.values):
        buf.write(",".join(str(int(c)) for c in s) + f",{v!r}\n")
    return buf.getvalue()


def report_json(report: dict) -> str:
    """Ray-Knight report records {site, mean_lhs, mean_rhs, se, m2_lhs, m2_rhs, p_value}."""
    keys = ("site", "mean_lhs", "mean_rhs", "se", "m2_lhs", "m2_rhs", "p_value")
    return json.dumps([{k: r[k] for k in keys} for r in report["sites"]], indent=1)
