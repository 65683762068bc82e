"""Graph-centrality alternatives to the rigidity projection.

Per feature cluster, samples become nodes of an unweighted graph joined
when their within-cluster distance is below ``rc_fraction * d_max``. The
coordinate of a sample is then its degree, harmonic closeness, Brandes
betweenness or eigenvector centrality in that graph.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .projection import CcpModel, _map

KINDS = ("degree", "closeness", "betweenness", "eigenvector")


def threshold_graph(points: np.ndarray, rc_fraction: float = 0.7) -> list[np.ndarray]:
    """Adjacency lists of the graph with edges at distance < rc_fraction * d_max."""
    if not 0 < rc_fraction <= 1:
        raise ValueError("rc_fraction must lie in (0, 1]")
    d = cdist(points, points)
    r_c = rc_fraction * d.max()
    adj = d < r_c
    np.fill_diagonal(adj, False)
    return [np.flatnonzero(row) for row in adj]


def _bfs(adj, source):
    dist = np.full(len(adj), -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def degree_centrality(adj) -> np.ndarray:
    return np.array([len(a) for a in adj], dtype=float)


def closeness_centrality(adj) -> np.ndarray:
    """Harmonic closeness: sum of inverse hop distances to reachable nodes."""
    out = np.zeros(len(adj))
    for s in range(len(adj)):
        dist = _bfs(adj, s)
        reach = dist > 0
        out[s] = np.sum(1.0 / dist[reach])
    return out


def betweenness_centrality(adj) -> np.ndarray:
    """Brandes' algorithm for unweighted, undirected graphs.

    Each unordered pair of endpoints is counted once.
    """
    n = len(adj)
    cb = np.zeros(n)
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1, dtype=np.int64)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return cb / 2.0


def components(adj) -> list[np.ndarray]:
    seen = np.zeros(len(adj), dtype=bool)
    comps = []
    for s in range(len(adj)):
        if not seen[s]:
            members = np.flatnonzero(_bfs(adj, s) >= 0)
            seen[members] = True
            comps.append(members)
    return comps


def eigenvector_centrality(adj, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Leading eigenvector per connected component, scaled to unit maximum.

    Iterates with ``A + I``, which has the same leading eigenvector as
    ``A`` but cannot oscillate on bipartite components.
    """
    out = np.zeros(len(adj))
    for comp in components(adj):
        if comp.size == 1:
            continue
        local = {int(v): k for k, v in enumerate(comp)}
        A = np.zeros((comp.size, comp.size))
        for v in comp:
            A[local[int(v)], [local[int(w)] for w in adj[v]]] = 1.0
        x = np.ones(comp.size)
        for _ in range(max_iter):
            nxt = A @ x + x
            nxt /= nxt.max()
            change = np.max(np.abs(nxt - x)) / np.max(np.abs(nxt))
            x = nxt
            if change < tol:
                break
        out[comp] = x
    return out


_CENTRALITY = {
    "degree": degree_centrality,
    "closeness": closeness_centrality,
    "betweenness": betweenness_centrality,
    "eigenvector": eigenvector_centrality,
}


def centrality(adj, kind: str) -> np.ndarray:
    try:
        return _CENTRALITY[kind](adj)
    except KeyError:
        raise ValueError(f"unknown centrality {kind!r}; expected one of {KINDS}") from None


def centrality_project(model: CcpModel, samples=None, kind: str = "degree",
                       rc_fraction: float = 0.7, threads: int = 1) -> np.ndarray:
    """Embed samples by graph centrality within each feature cluster.

    The graph spans the model's training rows followed by the query rows;
    with ``samples=None`` it spans the training rows only and those are
    embedded.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown centrality {kind!r}; expected one of {KINDS}")
    members = model.partition.clusters()
    query = None if samples is None else model.prepare(samples)

    def column(n):
        train = model.train_clusters[n]
        if query is None:
            pts, offset = train, 0
        else:
            pts, offset = np.vstack([train, query[:, members[n]]]), train.shape[0]
        return centrality(threshold_graph(pts, rc_fraction), kind)[offset:]

    return np.column_stack(_map(column, range(model.N), threads))
