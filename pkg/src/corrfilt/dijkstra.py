"""Shortest-path distances over an M-nearest-neighbour graph of points."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .spectral import DimensionError


@dataclass
class DistanceField:
    """Distances from ``source`` to every node of the graph (source included)."""

    distances: np.ndarray
    source: int = 0
    M: int = 1

    @property
    def to_points(self) -> np.ndarray:
        """Distances to the non-source nodes, in their original order."""
        return np.delete(self.distances, self.source)


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DimensionError(f"expected a non-empty (n, dim) point array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def distance_matrix(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = np.linalg.norm(points[i] - points[j])
    return d


def knn_graph(points, M: int, squared: bool = False) -> dict[int, dict[int, float]]:
    """Symmetric M-NN adjacency ``{node: {neighbour: weight}}``.

    ``p-q`` is an edge when q is among p's M nearest points or vice versa;
    equidistant candidates are ranked by lower index.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if not 1 <= M <= n:
        raise ValueError(f"M={M} out of range [1, {n}]")
    dist = distance_matrix(pts)
    adj: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (dist[i, j], j))
        for j in others[:M]:
            w = dist[i, j] ** 2 if squared else dist[i, j]
            adj[i][j] = w
            adj[j][i] = w
    return adj


def shortest_paths(adj: dict[int, dict[int, float]], source: int) -> np.ndarray:
    dist = np.full(len(adj), np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(len(adj), dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u].items():
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def graph_distances(nodes, M: int, squared: bool = False, source: int = 0) -> DistanceField:
    """Distances from ``nodes[source]`` over the M-NN graph of all ``nodes``.

    ``M`` counts neighbours among the other nodes, so ``M == len(nodes) - 1``
    is the complete graph.
    """
    pts = as_points(nodes)
    n = pts.shape[0] - 1
    if not 1 <= M <= max(n, 1):
        raise ValueError(f"M={M} out of range [1, {n}]")
    if M == n and not squared:
        # complete graph: by the triangle inequality the direct edge is a shortest
        # path, and taking it avoids rounding ties with collinear detours
        direct = np.array([np.linalg.norm(pts[i] - pts[source]) for i in range(n + 1)])
        return DistanceField(direct, source=source, M=M)
    return DistanceField(shortest_paths(knn_graph(pts, M, squared=squared), source), source=source, M=M)


def dijkstra_distance(source, points, M: int, squared: bool = False) -> DistanceField:
    """Graph distances from ``source`` to each point.

    The graph is ``knn_graph([source] + points, M)``; the source is node 0.
    Unreachable points get ``inf``. With ``M == len(points)`` the graph is
    complete and the result equals the straight-line distances.
    """
    pts = as_points(points)
    src = np.asarray(source, dtype=np.float64).ravel()
    if src.shape[0] != pts.shape[1]:
        raise DimensionError(f"source dim {src.shape[0]} != point dim {pts.shape[1]}")
    n = pts.shape[0]
    if not 1 <= M <= n:
        raise ValueError(f"M={M} out of range [1, {n}]")
    return graph_distances(np.vstack([src[None], pts]), M, squared)
