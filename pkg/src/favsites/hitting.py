"""Potential theory of the simple random walk.

Hitting probabilities P^x(T_A < T_B) are solved on the truncated ball D(0, R)
with two boundary conventions for escaping through its inner shell: a loss
(lower bound) or a win (upper bound). In d >= 3 the lower bound converges like
1/R, so a three-radius Richardson fit in 1/R gives the untruncated value.

All hitting times are first-return times, T_D = inf{m >= 1 : S_m in D}, unless
``include_start`` asks for the m >= 0 variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gamma as gamma_fn

from . import lattice
from .graphs import WeightedGraph
from .lattice import BoundaryPattern, SiteSet, pack, walk_until
from .rng import generator, replicate_seed

DEFAULT_RADII = (16, 32, 64)
DIRECT_MAX_UNKNOWNS = 20_000
CG_RTOL = 1e-10


class SingularSystemError(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class ProbabilityBracket:
    lower: float
    upper: float
    method: str
    truncation_radius: int | None = None
    std_error: float | None = None
    value: float | None = None

    def __post_init__(self):
        lo = min(max(self.lower, 0.0), 1.0)
        hi = min(max(self.upper, 0.0), 1.0)
        if lo > hi + 1e-12:
            raise ValueError(f"bracket lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", max(lo, hi))
        if self.value is None:
            object.__setattr__(self, "value", 0.5 * (lo + hi))

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def to_record(self, name: str, params: dict | None = None) -> dict:
        return {"name": name, "value": self.value, "lower": self.lower, "upper": self.upper,
                "std_error": self.std_error, "method": self.method, "params": params or {}}


@dataclass(frozen=True)
class ConstantEstimate:
    name: str
    value: float
    std_error: float
    replicates: int = 0
    truncation: dict = field(default_factory=dict)
    bias_bound: float | None = None
    lower: float | None = None
    upper: float | None = None
    method: str = "extrapolated-solve"

    def to_record(self, params: dict | None = None) -> dict:
        return {"name": self.name, "value": self.value, "lower": self.lower, "upper": self.upper,
                "std_error": self.std_error, "method": self.method,
                "params": {**self.truncation, "replicates": self.replicates,
                           "bias_bound": self.bias_bound, **(params or {})}}


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    """g(x, y): expected weight-normalised local time at y before the killed set."""

    sites: tuple
    entries: np.ndarray
    killed: tuple

    def __call__(self, x, y) -> float:
        return float(self.entries[self.sites.index(x), self.sites.index(y)])

    @property
    def free(self) -> np.ndarray:
        dead = {self.sites.index(k) for k in self.killed}
        return np.array([i for i in range(len(self.sites)) if i not in dead], dtype=np.int64)

    def submatrix(self) -> np.ndarray:
        f = self.free
        return self.entries[np.ix_(f, f)]


def green_prefactor(d: int) -> float:
    """c_d with G(x) ~ c_d |x|^(2-d) for the simple walk, d >= 3."""
    return 0.5 * d * gamma_fn(0.5 * d - 1) * math.pi ** (-0.5 * d)


# ---------------------------------------------------------------- truncated solves

def _as_keys(sites, d) -> tuple:
    if sites is None:
        return ()
    if isinstance(sites, SiteSet):
        return tuple(int(k) for k in sites.keys)
    if isinstance(sites, BoundaryPattern):
        return tuple(int(k) for k in sites.as_siteset().keys)
    arr = np.array(list(sites), dtype=np.int64).reshape(-1, d)
    return tuple(int(k) for k in np.unique(pack(arr))) if len(arr) else ()


@lru_cache(maxsize=4)
def _ball_masks(d: int, R: int):
    L = 2 * R + 3
    ax = np.arange(-R - 1, R + 2, dtype=np.int64)
    r2 = np.zeros((L,) * d, dtype=np.int64)
    mx = np.zeros((L,) * d, dtype=np.int64)
    for i in range(d):
        shape = [1] * d
        shape[i] = L
        c = ax.reshape(shape)
        r2 = r2 + c * c
        mx = np.maximum(mx, np.abs(c))
    r2, mx = r2.ravel(), mx.ravel()
    inside = r2 <= R * R
    shell = inside & (r2 + 2 * mx + 1 > R * R)
    return L, inside, shell, inside & ~shell


def _cell(coords, d, R):
    L = 2 * R + 3
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, d) + R + 1
    idx = np.zeros(len(coords), dtype=np.int64)
    for i in range(d):
        idx = idx * L + coords[:, i]
    return idx


def _factor(A):
    if A.shape[0] < DIRECT_MAX_UNKNOWNS:
        lu = spla.splu(A.tocsc())
        return lu.solve
    def solve(b):
        x, info = spla.cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=100_000)
        if info != 0:
            raise SingularSystemError(f"conjugate gradient did not converge (info={info})")
        return x
    return solve


@lru_cache(maxsize=6)
def _harmonic(d: int, R: int, targets: tuple, avoid: tuple):
    """Values on the cube cells: (lower, upper) conventions, nan outside D(0, R)."""
    L, inside, shell, interior = _ball_masks(d, R)
    tcells = _cell(lattice.unpack(np.array(targets, np.int64), d), d, R) if targets else np.zeros(0, np.int64)
    acells = _cell(lattice.unpack(np.array(avoid, np.int64), d), d, R) if avoid else np.zeros(0, np.int64)
    for c in np.r_[tcells, acells]:
        if not inside[c]:
            raise ValueError(f"radius {R} too small: a target/avoid site lies outside D(0,{R})")
    known_lo = np.where(shell, 0.0, np.nan)
    exit_val = np.where(shell, 1.0, 0.0)
    known_lo[tcells] = 1.0
    known_lo[acells] = 0.0
    exit_val[tcells] = 0.0
    exit_val[acells] = 0.0
    unknown = interior.copy()
    unknown[tcells] = False
    unknown[acells] = False
    ui = np.flatnonzero(unknown)
    pos = np.full(len(unknown), -1, dtype=np.int64)
    pos[ui] = np.arange(len(ui))
    strides = [L ** (d - 1 - i) for i in range(d)]
    rows, cols = [], []
    b_lo = np.zeros(len(ui))
    b_exit = np.zeros(len(ui))
    w = 1.0 / (2 * d)
    ar = np.arange(len(ui))
    for s in strides:
        for sign in (1, -1):
            nb = ui + sign * s
            j = pos[nb]
            m = j >= 0
            rows.append(ar[m])
            cols.append(j[m])
            kn = ~m
            b_lo[kn] += w * known_lo[nb[kn]]
            b_exit[kn] += w * exit_val[nb[kn]]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = sp.identity(len(ui), format="csr") - sp.csr_matrix((np.full(len(rows), w), (rows, cols)),
                                                           shape=(len(ui), len(ui)))
    solve = _factor(A)
    lo = known_lo.copy()
    lo[ui] = solve(b_lo)
    up = lo + exit_val
    up[ui] += solve(b_exit)
    return lo, up


def hitting_prob_bracket(d: int, targets, avoid=None, start=None, radius: int = 32,
                         include_start: bool = False) -> ProbabilityBracket:
    """Bracket on P^start(T_A < T_B) from the walk killed on leaving D(0, radius)."""
    lattice._check_dim(d)
    tk = _as_keys(targets, d)
    ak = _as_keys(avoid, d)
    if not tk and not ak:
        raise SingularSystemError("targets and avoid are both empty")
    if set(tk) & set(ak):
        raise ValueError("targets and avoid must be disjoint")
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    skey = int(pack(start[None, :])[0])
    if include_start and skey in tk:
        return ProbabilityBracket(1.0, 1.0, "truncated-solve", radius)
    if include_start and skey in ak:
        return ProbabilityBracket(0.0, 0.0, "truncated-solve", radius)
    L, inside, shell, interior = _ball_masks(d, radius)
    c0 = _cell(start, d, radius)[0]
    if not interior[c0] and not (inside[c0] and (skey in tk or skey in ak)):
        raise ValueError("start must lie strictly inside D(0, radius)")
    lo, up = _harmonic(d, radius, tuple(sorted(tk)), tuple(sorted(ak)))
    nbrs = _cell(start + lattice.unit_moves(d), d, radius)
    return ProbabilityBracket(float(lo[nbrs].mean()), float(up[nbrs].mean()), "truncated-solve", radius)


def extrapolated_hitting_prob(d: int, targets, avoid=None, start=None, radii=DEFAULT_RADII,
                              tol: float = 1e-3, include_start: bool = False) -> ProbabilityBracket:
    """Untruncated P^start(T_A < T_B) for d >= 3 by Richardson extrapolation in 1/R.

    ``value`` is the three-radius fit p + a/R + b/R^2; the bracket spans it and
    the two-radius extrapolant from the two largest radii, clipped to the rigorous
    bracket at the largest radius. Raises :class:`NonConvergence` if wider than
    ``tol``.
    """
    if d < 3:
        raise ValueError("1/R extrapolation needs a transient walk (d >= 3)")
    radii = tuple(sorted(radii))
    if len(radii) != 3:
        raise ValueError("three radii are needed")
    br = [hitting_prob_bracket(d, targets, avoid, start, R, include_start) for R in radii]
    lows = np.array([b.lower for b in br])
    M = np.array([[1.0, 1.0 / R, 1.0 / R ** 2] for R in radii])
    p3 = float(np.linalg.solve(M, lows)[0])
    R2, R3 = radii[1], radii[2]
    p2 = float((R3 * lows[2] - R2 * lows[1]) / (R3 - R2))
    lo = max(min(p2, p3), br[-1].lower)
    hi = min(max(p2, p3), br[-1].upper)
    value = min(max(p3, lo), hi)
    out = ProbabilityBracket(lo, max(hi, lo), "extrapolated-solve", radii[-1], 0.5 * abs(p3 - p2), value)
    if out.width > tol:
        raise NonConvergence(f"extrapolated bracket width {out.width:.2e} exceeds {tol:.0e}", out)
    return out


# ---------------------------------------------------------------- Monte Carlo

def _mc_se(p: float, n: int) -> float:
    se = math.sqrt(p * (1 - p) / n)
    return se if se > 0 else 1.0 / n


def hitting_prob_mc(d: int, targets, avoid=None, start=None, radius: float | None = 32,
                    replicates: int = 10_000, seed: int = 0, max_steps: int | None = None,
                    include_start: bool = False) -> ProbabilityBracket:
    """Monte-Carlo P^start(T_A < T_B), escape through the shell of D(0, radius) a loss."""
    if replicates <= 0:
        raise ValueError("replicates must be positive")
    if radius is None and max_steps is None:
        raise ValueError("an untruncated walk needs max_steps")
    tk = np.array(sorted(_as_keys(targets, d)), dtype=np.int64)
    ak = np.array(sorted(_as_keys(avoid, d)), dtype=np.int64)
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    skey = int(pack(start[None, :])[0])
    r2 = -1 if radius is None else int(math.floor(radius * radius))
    wins = 0
    for r in range(replicates):
        if include_start and skey in tk:
            wins += 1
            continue
        if include_start and skey in ak:
            continue
        _, code, _, _ = walk_until(generator(replicate_seed(seed, "hit", r)), d, start,
                                   targets=tk, avoid=ak, r2=r2, max_steps=max_steps)
        wins += code == 1
    p = wins / replicates
    return ProbabilityBracket(p, p, "monte-carlo", None if radius is None else int(radius),
                              _mc_se(p, replicates), p)


# ---------------------------------------------------------------- constants

def beta_from_bracket(bracket: ProbabilityBracket, name: str = "beta") -> ConstantEstimate:
    """beta = 1 / (-log p) with the bracket half-width propagated as the error."""
    p = bracket.value
    if not 0 < p < 1:
        raise ValueError(f"beta needs 0 < p < 1, got {p}")
    lp = math.log(p)
    dp = bracket.std_error if bracket.std_error is not None else 0.5 * bracket.width
    se = dp / (p * lp * lp)

    def f(x):
        return -1.0 / math.log(x) if 0 < x < 1 else math.inf

    return ConstantEstimate(name, -1.0 / lp, se, 0, {"radius": bracket.truncation_radius},
                            lower=f(bracket.lower) if bracket.lower > 0 else 0.0, upper=f(bracket.upper),
                            method=bracket.method)


def return_probability(d: int = 3, radii=DEFAULT_RADII) -> ProbabilityBracket:
    """P(T_0 < infinity)."""
    return extrapolated_hitting_prob(d, [(0,) * d], None, None, radii)


def beta_constant(d: int, H, radii=DEFAULT_RADII) -> ConstantEstimate:
    """beta_d(H) = 1 / (-log P(T_0 < T_H))."""
    if d < 3:
        raise ValueError("beta_d(H) is only defined here for d >= 3; the d = 2 analogue is open")
    H = H if isinstance(H, BoundaryPattern) else BoundaryPattern.certify(H)
    H.require_valid()
    if H.dimension != d:
        raise ValueError("pattern dimension does not match d")
    br = extrapolated_hitting_prob(d, [(0,) * d], list(H.offsets), None, radii)
    est = beta_from_bracket(br, "beta_d(H)")
    return ConstantEstimate(est.name, est.value, est.std_error, 0,
                            {"radii": list(radii), "H": [list(h) for h in H.offsets],
                             "p": br.value}, lower=est.lower, upper=est.upper)


def erdos_taylor_constant(d: int = 3, radii=DEFAULT_RADII) -> ConstantEstimate:
    """1 / (-log P(T_0 < infinity)), the favourite-point growth rate in d >= 3."""
    est = beta_from_bracket(return_probability(d, radii), "erdos_taylor")
    return ConstantEstimate(est.name, est.value, est.std_error, 0, {"radii": list(radii)},
                            lower=est.lower, upper=est.upper)


def _far_hit_bound(x, sites, d):
    """min(1, sum_a c_d |x - a|^(2-d)), a Green-decay estimate of P^x(ever hit sites)."""
    if d < 3:
        return 1.0
    diff = np.asarray(sites, dtype=float) - np.asarray(x, dtype=float)
    dist = np.sqrt((diff ** 2).sum(1))
    if (dist == 0).any():
        return 1.0
    return float(min(1.0, (green_prefactor(d) * dist ** (2.0 - d)).sum()))


def q_constant(d: int, H, walk_length: int, replicates: int, seed: int = 0) -> ConstantEstimate:
    """Monte-Carlo density q of the H-boundary of the range.

    q = P(S and S' avoid H, and S never returns to 0), S and S' independent walks
    from 0 (S' stands for the time-reversed past, which is again a simple walk).
    Both walks are truncated at ``walk_length`` steps; ``bias_bound`` estimates
    how much the truncation overstates q, from the Green-function decay of the
    probability that a surviving walk later hits H or 0.
    """
    if replicates <= 0:
        raise ValueError("replicates must be positive")
    if d < 3:
        raise ValueError("q is defined for d >= 3")
    H = H if isinstance(H, BoundaryPattern) else BoundaryPattern.certify(H)
    H.require_valid()
    origin = np.zeros(d, dtype=np.int64)
    hs = np.array(H.offsets, dtype=np.int64)
    forward = np.array(sorted(_as_keys(list(H.offsets) + [(0,) * d], d)), dtype=np.int64)
    backward = np.array(sorted(_as_keys(list(H.offsets), d)), dtype=np.int64)
    forward_sites = np.vstack([hs, origin[None, :]])
    hits = 0
    bias = 0.0
    for r in range(replicates):
        _, code, xs, _ = walk_until(generator(replicate_seed(seed, "q", r, 0)), d, origin,
                                    targets=forward, max_steps=walk_length)
        if code != 0:
            continue
        _, code, xp, _ = walk_until(generator(replicate_seed(seed, "q", r, 1)), d, origin,
                                    targets=backward, max_steps=walk_length)
        if code != 0:
            continue
        hits += 1
        bias += min(1.0, _far_hit_bound(xs, forward_sites, d) + _far_hit_bound(xp, hs, d))
    p = hits / replicates
    return ConstantEstimate("q", p, _mc_se(p, replicates), replicates,
                            {"walk_length": walk_length, "H": [list(h) for h in H.offsets]},
                            bias_bound=bias / replicates, method="monte-carlo")


def q_exact(d: int, H, radii=DEFAULT_RADII) -> ConstantEstimate:
    """q from the solver: P^0(T_{H u {0}} = inf) * P^0(T_H = inf), the two walks being independent."""
    H = H if isinstance(H, BoundaryPattern) else BoundaryPattern.certify(H)
    H.require_valid()
    a = extrapolated_hitting_prob(d, list(H.offsets) + [(0,) * d], None, None, radii)
    b = extrapolated_hitting_prob(d, list(H.offsets), None, None, radii)
    v = (1 - a.value) * (1 - b.value)
    se = math.hypot((1 - b.value) * a.std_error, (1 - a.value) * b.std_error)
    return ConstantEstimate("q", v, se, 0, {"radii": list(radii)},
                            lower=(1 - a.upper) * (1 - b.upper), upper=(1 - a.lower) * (1 - b.lower))


# ---------------------------------------------------------------- planar tails

def _tail_samples(H_sites, start, n_max, replicates, seed, label):
    keys = np.array(sorted(_as_keys(H_sites, 2)), dtype=np.int64)
    T = np.empty(replicates, dtype=np.int64)
    for r in range(replicates):
        steps, code, _, _ = walk_until(generator(replicate_seed(seed, label, tuple_code(start), r)), 2,
                                       np.asarray(start, np.int64), targets=keys, max_steps=n_max)
        T[r] = steps if code == 1 else n_max + 1
    return T


def tuple_code(site) -> int:
    return int(pack(np.asarray(site, dtype=np.int64)[None, :])[0])


def kesten_tail(H, n_list, replicates: int = 10_000, seed: int = 0) -> list[dict]:
    """Monte-Carlo sum_{i in H} P^i(T_H >= n) * log(n) / pi in d = 2, for each n."""
    sites = list(H) if not isinstance(H, SiteSet) else list(H)
    if not sites:
        raise ValueError("H must be nonempty")
    if any(len(s) != 2 for s in sites):
        raise ValueError("kesten_tail is planar (d = 2)")
    n_list = sorted(int(n) for n in n_list)
    samples = {tuple(s): _tail_samples(sites, s, n_list[-1], replicates, seed, "kesten") for s in sites}
    out = []
    for n in n_list:
        probs = {s: float((T >= n).mean()) for s, T in samples.items()}
        total = sum(probs.values())
        se = math.sqrt(sum(p * (1 - p) / replicates for p in probs.values()))
        scale = math.log(n) / math.pi
        out.append({"n": n, "value": total * scale, "std_error": se * scale, "sum": total,
                    "per_start": {str(s): p for s, p in probs.items()}})
    return out


def two_point_tail(b=(1, 0), n_list=(1000,), replicates: int = 10_000, seed: int = 0) -> list[dict]:
    """Monte-Carlo P^0(T_0 ^ T_b >= n) * 2 log(n) / pi in d = 2."""
    n_list = sorted(int(n) for n in n_list)
    T = _tail_samples([(0, 0), tuple(b)], (0, 0), n_list[-1], replicates, seed, "two-point")
    out = []
    for n in n_list:
        p = float((T >= n).mean())
        scale = 2 * math.log(n) / math.pi
        out.append({"n": n, "value": p * scale, "std_error": _mc_se(p, replicates) * scale, "prob": p})
    return out


# ---------------------------------------------------------------- Green matrices

def green_matrix(graph: WeightedGraph, killed) -> GreenMatrix:
    """Dense Green matrix of the unit-rate walk killed on ``killed``.

    g = (Lambda - C)^{-1} on the free sites, zero on killed rows and columns.
    """
    killed = list(killed)
    if not killed:
        raise SingularSystemError("killed set must be nonempty")
    kidx = np.array([graph.index(k) for k in killed], dtype=np.int64)
    free = np.setdiff1d(np.arange(len(graph)), kidx)
    C = graph.conductance
    Cff = C[free][:, free]
    ncomp, labels = sp.csgraph.connected_components(Cff, directed=False)
    to_killed = np.asarray(C[free][:, kidx].sum(axis=1)).ravel()
    for comp in range(ncomp):
        if to_killed[labels == comp].sum() <= 0:
            raise SingularSystemError("a component of the free sites never reaches the killed set")
    M = np.diag(graph.lam[free]) - Cff.toarray()
    cf = scipy.linalg.cho_factor(M, lower=True)
    Gf = scipy.linalg.cho_solve(cf, np.eye(len(free)))
    Gf = 0.5 * (Gf + Gf.T)
    full = np.zeros((len(graph), len(graph)))
    full[np.ix_(free, free)] = Gf
    return GreenMatrix(tuple(graph.sites), full, tuple(killed))
