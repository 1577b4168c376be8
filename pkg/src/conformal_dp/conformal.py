"""Graph Laplacian, discrete Helmholtz–Poisson solve, and conformal distances.

The manifold is represented by a symmetric union-kNN graph over the nodes.
``σ`` solves ``(L + υI) σ = c̃ - f̃`` and the conformal factor is
``φ = exp(2σ)``. Conformal distances are shortest paths with edge lengths
``ρ_g(x_i, x_j) · (√φ_i + √φ_j) / 2``; off-node points are wired into the
graph through their k nearest nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import cg

from .density import DensityField, weighted_mean
from .errors import CGDivergence, DisconnectedGraph, DomainError, NumericError
from .manifold import ManifoldSpec, as_points, distances, pairwise_distances


def default_knn(n: int) -> int:
    return min(n - 1, max(10, math.ceil(math.log2(max(n, 2))) + 5))


@dataclass(frozen=True)
class GraphLaplacian:
    nodes: np.ndarray
    spec: ManifoldSpec
    weights: sparse.csr_matrix      # W
    lengths: sparse.csr_matrix      # ρ_g on the same edges
    degree: np.ndarray
    laplacian: sparse.csr_matrix    # L = D - W
    knn_k: int
    edge_bandwidth: float

    @property
    def n(self) -> int:
        return len(self.nodes)


def knn_indices(dist: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other nodes per row (stable on ties)."""
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def build_graph(nodes, k: Optional[int], h_L: Optional[float], spec: ManifoldSpec) -> GraphLaplacian:
    """Union-kNN graph with heat-kernel weights ``exp(-ρ²/h_L²)``.

    ``k=None`` uses ``max(10, ⌈log2 n⌉ + 5)``; ``h_L=None`` uses the median
    kNN edge length.
    """
    nodes = as_points(spec, nodes)
    n = len(nodes)
    if k is None:
        k = default_knn(n)
    if n < k + 1:
        raise DomainError(f"need at least k+1 = {k + 1} nodes, got {n}")
    dist = pairwise_distances(spec, nodes)
    nbrs = knn_indices(dist, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    mask = np.zeros((n, n), dtype=bool)
    mask[rows, cols] = True
    mask |= mask.T
    if h_L is None:
        h_L = float(np.median(dist[rows, cols]))
    if not h_L > 0:
        raise DomainError("edge bandwidth must be positive")
    ii, jj = np.nonzero(mask)
    rho = dist[ii, jj]
    w = np.exp(-(rho**2) / h_L**2)
    W = sparse.csr_matrix((w, (ii, jj)), shape=(n, n))
    lengths = sparse.csr_matrix((rho, (ii, jj)), shape=(n, n))
    n_comp, _ = csgraph.connected_components(W, directed=False)
    if n_comp != 1:
        raise DisconnectedGraph(f"kNN graph has {n_comp} components; increase k")
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = (sparse.diags(deg) - W).tocsr()
    return GraphLaplacian(nodes=nodes, spec=spec, weights=W, lengths=lengths, degree=deg,
                          laplacian=L, knn_k=k, edge_bandwidth=h_L)


def _cg_solve(A, b, x0, rtol, maxiter):
    if not np.all(np.isfinite(b)):
        raise CGDivergence("right-hand side has non-finite entries")
    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0 or not np.all(np.isfinite(x)):
        raise CGDivergence(f"conjugate gradient failed (info={info})")
    return x


def heat_smooth(graph: GraphLaplacian, values, t: float = 0.01, steps: int = 3) -> np.ndarray:
    """m implicit-Euler steps of the graph heat flow: ((I + (t/m)L)^{-1})^m v."""
    v = np.asarray(values, dtype=float)
    if v.shape != (graph.n,):
        raise DomainError("values must have one entry per node")
    if steps < 1 or t < 0:
        raise DomainError("need t >= 0 and steps >= 1")
    A = sparse.identity(graph.n, format="csr") + (t / steps) * graph.laplacian
    total = v.sum()
    x = v
    for _ in range(steps):
        x = _cg_solve(A, x, x0=x, rtol=1e-13, maxiter=10 * graph.n)
    # L annihilates constants, so the plain sum is conserved exactly in exact arithmetic
    return x + (total - x.sum()) / graph.n


def solve_helmholtz(graph: GraphLaplacian, rhs, upsilon: float) -> np.ndarray:
    """Solve (L + υI) σ = rhs by conjugate gradient."""
    if not upsilon > 0:
        raise DomainError("upsilon must be positive")
    h = np.asarray(rhs, dtype=float)
    A = graph.laplacian + upsilon * sparse.identity(graph.n, format="csr")
    return _cg_solve(A, h, x0=h / upsilon, rtol=1e-12, maxiter=10 * graph.n)


@dataclass(frozen=True)
class ConformalStructure:
    laplacian: GraphLaplacian
    upsilon: float
    sigma: np.ndarray
    phi: np.ndarray
    phi_min: float
    phi_max: float
    source: Optional[DensityField] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def spec(self) -> ManifoldSpec:
        return self.laplacian.spec

    @property
    def nodes(self) -> np.ndarray:
        return self.laplacian.nodes

    @property
    def sqrt_phi(self) -> np.ndarray:
        if "sqrt_phi" not in self._cache:
            self._cache["sqrt_phi"] = np.sqrt(self.phi)
        return self._cache["sqrt_phi"]

    def conformal_adjacency(self) -> sparse.csr_matrix:
        """Edge lengths ℓ*_ij = ρ_g(x_i, x_j)(√φ_i + √φ_j)/2 on the graph edges."""
        if "adj" not in self._cache:
            G = self.laplacian.lengths.tocoo()
            s = self.sqrt_phi
            ell = G.data * (s[G.row] + s[G.col]) / 2.0
            self._cache["adj"] = sparse.csr_matrix((ell, (G.row, G.col)), shape=G.shape)
        return self._cache["adj"]

    def node_weights(self) -> np.ndarray:
        if self.source is not None:
            return self.source.weights
        return np.ones(self.laplacian.n)

    def sigma_phi_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_index", "sigma", "phi"])
            for i, (s, p) in enumerate(zip(self.sigma, self.phi)):
                w.writerow([i, repr(float(s)), repr(float(p))])

    def edges_csv(self, path) -> None:
        W = self.laplacian.weights.tocoo()
        G = self.laplacian.lengths.tocsr()
        A = self.conformal_adjacency()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "rho_g", "weight", "ell_star"])
            for i, j, wt in sorted(zip(W.row, W.col, W.data)):
                if i < j:
                    w.writerow([i, j, repr(float(G[i, j])), repr(float(wt)), repr(float(A[i, j]))])


def structure_from_sigma(graph, sigma, upsilon, source=None) -> ConformalStructure:
    phi = np.exp(2.0 * np.asarray(sigma, dtype=float))
    return ConformalStructure(laplacian=graph, upsilon=upsilon, sigma=np.asarray(sigma),
                              phi=phi, phi_min=float(phi.min()), phi_max=float(phi.max()),
                              source=source)


def solve_sigma(graph: GraphLaplacian, field: DensityField, upsilon: float = 1.0,
                require_sanitized: bool = True) -> ConformalStructure:
    """σ from the sanitised density: (L + υI) σ = c̃ - f̃ at the nodes."""
    if require_sanitized and not field.sanitized:
        raise DomainError("solve_sigma needs a sanitized density field")
    if len(field.values) != graph.n:
        raise DomainError("density field and graph have different node counts")
    sigma = solve_helmholtz(graph, field.mean_c - field.values, upsilon)
    return structure_from_sigma(graph, sigma, upsilon, source=field)


def comparison_monotonicity_check(graph: GraphLaplacian, upsilon: float, f1, f2, c=None) -> bool:
    """Whether σ(f1) >= σ(f2) - 1e-9 componentwise for a shared constant c.

    Both solves use the same constant (default: the mean of ``f1``), which is
    the setting in which f1 <= f2 forces σ(f1) >= σ(f2).
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if c is None:
        c = float(np.mean(f1))
    s1 = solve_helmholtz(graph, c - f1, upsilon)
    s2 = solve_helmholtz(graph, c - f2, upsilon)
    return bool(np.all(s1 >= s2 - 1e-9))


# ---------------------------------------------------------------- off-node access

def _nearest(cs: ConformalStructure, z, k=None):
    d = distances(cs.spec, z, cs.nodes)
    k = cs.laplacian.knn_k if k is None else k
    k = min(k, len(d))
    idx = np.argpartition(d, k - 1)[:k]
    idx = idx[np.argsort(d[idx], kind="stable")]
    return idx, d[idx]


def _shepard(cs: ConformalStructure, idx, d) -> float:
    if d[0] == 0.0:
        return float(cs.phi[idx[0]])
    h = cs.laplacian.edge_bandwidth
    # Gaussian damping times inverse-square distance: interpolates node values exactly
    w = np.exp(-(d**2) / h**2) / d**2
    if not np.any(w > 0):
        return float(cs.phi[idx[0]])
    val = float(np.sum(w * cs.phi[idx]) / np.sum(w))
    return min(max(val, cs.phi_min), cs.phi_max)


def phi_at(cs: ConformalStructure, z, spec: Optional[ManifoldSpec] = None) -> float:
    """Conformal factor at an arbitrary point, clamped to [φ_min, φ_max]."""
    idx, d = _nearest(cs, np.asarray(z, dtype=float))
    return _shepard(cs, idx, d)


def conformal_volume_factor(cs: ConformalStructure, z, spec: Optional[ManifoldSpec] = None) -> float:
    return phi_at(cs, z) ** (cs.spec.intrinsic_dim / 2.0)


def dijkstra(adjacency, source: int) -> np.ndarray:
    """Single-source shortest-path lengths over a sparse adjacency matrix."""
    d = csgraph.dijkstra(adjacency, directed=False, indices=int(source))
    return np.asarray(d, dtype=float)


class _Endpoint:
    """An arbitrary point wired to its k nearest graph nodes."""

    def __init__(self, cs: ConformalStructure, z):
        self.z = np.asarray(z, dtype=float)
        self.idx, self.d = _nearest(cs, self.z)
        self.phi = _shepard(cs, self.idx, self.d)
        self.sqrt_phi = math.sqrt(self.phi)
        self.reach = float(self.d[-1])

    def edge_lengths(self, cs: ConformalStructure, conformal: bool) -> np.ndarray:
        if not conformal:
            return self.d
        return self.d * (self.sqrt_phi + cs.sqrt_phi[self.idx]) / 2.0


class DistanceField:
    """Cached single-source distances from a fixed point under ρ* (or ρ_G).

    The source is wired to its k nearest nodes and Dijkstra runs once; a
    target is then wired the same way, plus a direct source–target edge when
    either lies within the other's kNN reach.
    """

    def __init__(self, cs: ConformalStructure, source, conformal: bool = True):
        self.cs = cs
        self.conformal = conformal
        self.src = _Endpoint(cs, source)
        adj = cs.conformal_adjacency() if conformal else cs.laplacian.lengths
        n = cs.laplacian.n
        ell = self.src.edge_lengths(cs, conformal)
        extra_r = np.concatenate([np.full(len(ell), n), self.src.idx])
        extra_c = np.concatenate([self.src.idx, np.full(len(ell), n)])
        # tiny floor keeps zero-length edges (source on a node) explicit in csgraph
        extra_w = np.maximum(np.concatenate([ell, ell]), 1e-300)
        adj = adj.tocoo()
        aug = sparse.csr_matrix(
            (np.concatenate([adj.data, extra_w]),
             (np.concatenate([adj.row, extra_r]), np.concatenate([adj.col, extra_c]))),
            shape=(n + 1, n + 1))
        d = dijkstra(aug, n)
        if not np.all(np.isfinite(d)):
            raise DisconnectedGraph("source cannot reach every node")
        self.node_dist = d[:n]

    def to(self, z) -> float:
        return self.to_endpoint(_Endpoint(self.cs, z))

    def to_endpoint(self, tgt: "_Endpoint") -> float:
        best = float(np.min(self.node_dist[tgt.idx] + tgt.edge_lengths(self.cs, self.conformal)))
        rho = float(distances(self.cs.spec, self.src.z, tgt.z[None])[0])
        if rho <= max(self.src.reach, tgt.reach):
            direct = rho
            if self.conformal:
                direct = rho * (self.src.sqrt_phi + tgt.sqrt_phi) / 2.0
            best = min(best, direct)
        return best


def conformal_distance(cs: ConformalStructure, a, b, spec: Optional[ManifoldSpec] = None,
                       conformal: bool = True) -> float:
    """ρ*(a, b) on the augmented graph; ``conformal=False`` gives ρ_G."""
    return DistanceField(cs, a, conformal=conformal).to(b)


def node_distances(cs: ConformalStructure, source: int, conformal: bool = True) -> np.ndarray:
    adj = cs.conformal_adjacency() if conformal else cs.laplacian.lengths
    d = dijkstra(adj, source)
    if not np.all(np.isfinite(d)):
        raise DisconnectedGraph("graph is disconnected")
    return d


def bilateral_bounds(cs: ConformalStructure, rho_graph: float):
    """(√φ_min·ρ_G, √φ_max·ρ_G)."""
    return math.sqrt(cs.phi_min) * rho_graph, math.sqrt(cs.phi_max) * rho_graph


def assert_finite(x, what="value"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} is not finite")
