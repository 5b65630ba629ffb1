"""Symmetric unweighted k-nearest-neighbor graphs over article embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

BRUTE_FORCE = "brute-force"
KD_TREE = "kd-tree"
BACKENDS = (BRUTE_FORCE, KD_TREE)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    k: int = 10
    backend: str = KD_TREE
    normalize_rows: bool = False

    def __post_init__(self):
        if int(self.k) < 1:
            raise GraphError(f"k must be at least 1, got {self.k}")
        if self.backend not in BACKENDS:
            raise GraphError(f"backend must be one of {BACKENDS}, got {self.backend!r}")


@dataclass
class KnnGraph:
    adjacency: sp.csr_matrix
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    def edges(self) -> np.ndarray:
        """``(E, 2)`` array of undirected edges with ``u < v``, sorted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]]).astype(np.int64)

    @classmethod
    def from_edges(cls, n: int, edges) -> KnnGraph:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise GraphError("self loops are not allowed")
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        adj.sort_indices()
        return cls(adj, degrees(adj))


def l2_distance(p, q) -> float:
    """Euclidean distance ``sqrt(sum_i (q_i - p_i)^2)``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise GraphError(f"vectors must be 1-D with equal length, got {p.shape} and {q.shape}")
    diff = q - p
    return float(np.sqrt(np.dot(diff, diff)))


def _sq_dists(points: np.ndarray, query: int, cand: np.ndarray) -> np.ndarray:
    # Both backends rank through this one function so that ties compare bit-for-bit.
    diff = np.ascontiguousarray(points[cand] - points[query])
    return (diff * diff).sum(axis=1)


def _select(dist: np.ndarray, cand: np.ndarray, query: int, k: int) -> np.ndarray:
    keep = cand != query
    dist, cand = dist[keep], cand[keep]
    order = np.lexsort((cand, dist))
    return cand[order[:k]]


def _neighbors_brute(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    all_idx = np.arange(n)
    out = np.empty((n, k), dtype=np.int64)
    for q in range(n):
        out[q] = _select(_sq_dists(points, q, all_idx), all_idx, q, k)
    return out


def _neighbors_kdtree(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    tree = cKDTree(points)
    # k + 1 because the query point itself (or a duplicate of it) comes back first
    dist, _ = tree.query(points, k=k + 1)
    radius = dist[:, -1] * (1.0 + 1e-9) + 1e-12
    candidates = tree.query_ball_point(points, radius)
    out = np.empty((n, k), dtype=np.int64)
    for q in range(n):
        cand = np.asarray(candidates[q], dtype=np.int64)
        out[q] = _select(_sq_dists(points, q, cand), cand, q, k)
    return out


def knn_graph(points, config: GraphConfig | None = None) -> KnnGraph:
    """Connect ``u`` and ``v`` when either is among the other's ``k`` nearest points.

    Distances are Euclidean; a tie at the k-th distance goes to the smaller
    node index, so both backends return the same graph.
    """
    config = config or GraphConfig()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2:
        raise GraphError("points must be a 2-D array")
    n = points.shape[0]
    k = int(config.k)
    if k >= n:
        raise GraphError(f"k={k} must be smaller than the number of points M={n}")
    if not np.all(np.isfinite(points)):
        raise GraphError("points contain non-finite coordinates")
    if config.normalize_rows:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = points / np.where(norms > 0, norms, 1.0)
    points = np.ascontiguousarray(points)

    if config.backend == BRUTE_FORCE:
        nbrs = _neighbors_brute(points, k)
    else:
        nbrs = _neighbors_kdtree(points, k)
    rows = np.repeat(np.arange(n), k)
    return KnnGraph.from_edges(n, np.column_stack([rows, nbrs.ravel()]))


def degrees(graph) -> np.ndarray:
    """Row sums of the adjacency matrix (accepts a graph or a sparse/dense matrix)."""
    adj = graph.adjacency if isinstance(graph, KnnGraph) else graph
    return np.asarray(adj.sum(axis=1)).ravel()


def save_edge_list(graph: KnnGraph, path) -> None:
    """Header ``M E`` then one ``u v`` line per edge with ``u < v``."""
    edges = graph.edges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n} {len(edges)}\n")
        fh.writelines(f"{u} {v}\n" for u, v in edges)


def load_edge_list(path) -> KnnGraph:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        n, n_edges = (int(x) for x in lines[0].split())
    except ValueError:
        raise GraphError(f"{path}:1: header must be 'M E'") from None
    body = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(body) != n_edges:
        raise GraphError(f"{path}: header announces {n_edges} edges, found {len(body)}")
    return KnnGraph.from_edges(n, np.array(body, dtype=np.int64).reshape(-1, 2))
