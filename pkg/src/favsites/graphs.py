"""Finite weighted graphs for the continuous-time walk and Green matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with symmetric conductances c(x, y).

    ``lam[x] = sum_y c(x, y)`` is the total conductance at x. The walk jumps at
    unit rate from every site, to y with probability c(x, y) / lam[x].
    """

    sites: tuple
    conductance: sparse.csr_matrix
    origin: int = 0
    name: str = ""

    def __post_init__(self):
        C = sparse.csr_matrix(self.conductance, dtype=float)
        if C.shape != (len(self.sites), len(self.sites)):
            raise ValueError("conductance matrix does not match the site list")
        if C.nnz and abs(C - C.T).max() > 1e-12:
            raise ValueError("conductances must be symmetric")
        if C.nnz and C.data.min() < 0:
            raise ValueError("conductances must be non-negative")
        object.__setattr__(self, "conductance", C)

    def __len__(self):
        return len(self.sites)

    @cached_property
    def lam(self) -> np.ndarray:
        return np.asarray(self.conductance.sum(axis=1)).ravel()

    def index(self, site) -> int:
        return self.sites.index(site)

    def is_connected(self) -> bool:
        return self._connected

    @cached_property
    def _connected(self) -> bool:
        ncomp, _ = sparse.csgraph.connected_components(self.conductance, directed=False)
        return ncomp == 1

    def jump_table(self):
        """CSR arrays (indptr, indices, cumulative jump probabilities)."""
        return self._jump_table

    @cached_property
    def _jump_table(self):
        C = self.conductance.tocsr()
        C.sort_indices()
        lam = self.lam
        if (lam <= 0).any():
            raise ValueError("graph has isolated sites")
        probs = C.data / np.repeat(lam, np.diff(C.indptr))
        cum = np.empty_like(probs)
        for v in range(len(lam)):
            lo, hi = C.indptr[v], C.indptr[v + 1]
            cum[lo:hi] = np.cumsum(probs[lo:hi])
            cum[hi - 1] = 1.0
        return C.indptr.astype(np.int64), C.indices.astype(np.int64), cum


def from_edges(sites, edges, origin=0, name="") -> WeightedGraph:
    """``edges`` is an iterable of (u, v, c) with site labels u, v."""
    sites = tuple(sites)
    pos = {s: i for i, s in enumerate(sites)}
    rows, cols, vals = [], [], []
    for u, v, c in edges:
        i, j = pos[u], pos[v]
        rows += [i, j]
        cols += [j, i]
        vals += [c, c]
    C = sparse.coo_matrix((vals, (rows, cols)), shape=(len(sites), len(sites))).tocsr()
    return WeightedGraph(sites, C, pos[origin] if origin in pos else origin, name)


def cycle(k: int, weight: float = 1.0) -> WeightedGraph:
    if k < 3:
        raise ValueError("a cycle needs at least 3 sites")
    return from_edges(range(k), [(i, (i + 1) % k, weight) for i in range(k)], 0, f"cycle({k})")


def path_graph(k: int, weight: float = 1.0) -> WeightedGraph:
    if k < 2:
        raise ValueError("a path needs at least 2 sites")
    return from_edges(range(k), [(i, i + 1, weight) for i in range(k - 1)], 0, f"path({k})")


def box(n: int, weight: float = 0.25) -> WeightedGraph:
    """n x n piece of Z^2; with weight 1/4 every interior site has lam = 1."""
    sites = [(i, j) for i in range(n) for j in range(n)]
    edges = [((i, j), (i + 1, j), weight) for i in range(n - 1) for j in range(n)]
    edges += [((i, j), (i, j + 1), weight) for i in range(n) for j in range(n - 1)]
    return from_edges(sites, edges, (n // 2, n // 2), f"box({n})")


def box_boundary(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i in (0, n - 1) or j in (0, n - 1)]


def parse_graph(spec: str) -> WeightedGraph:
    """Parse ``cycle(4)``, ``path(3)`` or ``box(5)``."""
    spec = spec.strip()
    for prefix, fn in (("cycle", cycle), ("path", path_graph), ("box", box)):
        if spec.startswith(prefix + "(") and spec.endswith(")"):
            return fn(int(spec[len(prefix) + 1:-1]))
    raise ValueError(f"unknown graph spec {spec!r}")
