"""Bridge decomposition and piece-local thinness evaluation.

Removing all bridges splits a graph into bridgeless pieces.  Each piece is
convex: a geodesic that leaves a piece through a bridge would have to come
back through the same bridge.  This makes thinness local.

Take a query (p, q, center, r) whose center lies in piece P.  If the center
is a bridge midpoint the answer is "thin": every path joining the two sides
crosses that edge.  Otherwise let a be the vertex where the segment enters P
(a = p when p is in P) and b the vertex where it leaves P.  Any violating
quadrangle can be pulled back into P:

* a corner hanging off P behind an attachment vertex t is replaced by t,
  because every side reaching the corner passes t;
* when p lies outside P the corner behind p is replaced by a, because the
  return path must cross the bridge at a;
* the ball does not reach past a or b unless it contains them, and then the
  return path cannot avoid it.

Conversely a violation inside P extends along the segment to one in the
whole graph.  So the query is decided inside P with the ball restricted to
P, free corners on the sides where the endpoint lies in P, and the corner
pinned to a (or b) otherwise.
"""

from __future__ import annotations

import threading
from collections import OrderedDict, deque

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import shortest_path

from .graph import HalfInt, MetricGraph, _removed_adjacency, all_pairs_distances, ball_mask


class BridgeStructure:
    """Bridges, bridgeless pieces and the tree they form."""

    def __init__(self, g: MetricGraph):
        self.graph = g
        n = g.vertex_count
        nxg = nx.Graph()
        nxg.add_nodes_from(range(n))
        nxg.add_edges_from(g.edges)
        self.bridges = frozenset(
            (u, w) if u < w else (w, u) for u, w in nx.bridges(nxg))
        nxg.remove_edges_from(self.bridges)
        comps = sorted((sorted(c) for c in nx.connected_components(nxg)), key=lambda c: c[0])
        self.pieces = [np.asarray(c, dtype=np.int64) for c in comps]
        self.piece_of = np.empty(n, dtype=np.int64)
        self.local_index = np.empty(n, dtype=np.int64)
        for i, comp in enumerate(self.pieces):
            self.piece_of[comp] = i
            self.local_index[comp] = np.arange(len(comp))
        self.tree_adj: list[list[tuple[int, int]]] = [[] for _ in self.pieces]
        for u, w in sorted(self.bridges):
            pu, pw = int(self.piece_of[u]), int(self.piece_of[w])
            self.tree_adj[pu].append((pw, u))
            self.tree_adj[pw].append((pu, w))
        self._gates: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def is_bridge(self, u: int, w: int) -> bool:
        return ((u, w) if u < w else (w, u)) in self.bridges

    def gates(self, piece: int) -> np.ndarray:
        """For every piece, the vertex of ``piece`` where paths from it enter."""
        got = self._gates.get(piece)
        if got is not None:
            return got
        gate = np.full(len(self.pieces), -1, dtype=np.int64)
        for nb, mine in self.tree_adj[piece]:
            gate[nb] = mine
        queue = deque(nb for nb, _ in self.tree_adj[piece])
        seen = {piece, *queue}
        while queue:
            cur = queue.popleft()
            for nb, _ in self.tree_adj[cur]:
                if nb not in seen:
                    seen.add(nb)
                    gate[nb] = gate[cur]
                    queue.append(nb)
        with self._lock:
            self._gates[piece] = gate
        return gate

    def gate(self, piece: int, v: int) -> int:
        pv = int(self.piece_of[v])
        if pv == piece:
            return v
        return int(self.gates(piece)[pv])


class PieceAnalyzer:
    """Thinness inside one bridgeless piece, in local vertex indices."""

    def __init__(self, graph: MetricGraph, dist: np.ndarray | None = None):
        self.graph = graph
        self.d = all_pairs_distances(graph).array if dist is None else dist
        self.n = graph.vertex_count
        self._cache: OrderedDict = OrderedDict()
        self._max_cached = max(8, int(4e7 // max(1, self.n * self.n)))
        self._lock = threading.Lock()

    def compute_transit(self, center, radius: HalfInt) -> np.ndarray:
        """T = A∘A∘A for the avoid relation of the ball, without caching."""
        inside = ball_mask(self.d, center, radius)
        outside = ~inside
        cut = None
        if isinstance(center, tuple) and radius.doubled == 0:
            cut = center
        adj = _removed_adjacency(self.graph, outside, cut)
        dist = shortest_path(adj, directed=False, unweighted=True)
        rel = (dist == self.d) & outside[:, None] & outside[None, :]
        f = rel.astype(np.float32)
        two = ((f @ f) > 0).astype(np.float32)
        return (two @ f) > 0

    def transit(self, center, radius: HalfInt) -> np.ndarray:
        key = (center if not isinstance(center, tuple) else tuple(sorted(center)), radius.doubled)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        T = self.compute_transit(center, radius)
        with self._lock:
            self._cache[key] = T
            while len(self._cache) > self._max_cached:
                self._cache.popitem(last=False)
        return T

    def violated(self, a: int, b: int, T: np.ndarray, pin_a=False, pin_b=False) -> bool:
        """Some aligned corners x (behind a) and y (beyond b) satisfy T(x, y)."""
        d = self.d
        L = d[a, b]
        xs = np.array([a]) if pin_a else np.flatnonzero(d[:, b] == d[:, a] + L)
        ys = np.array([b]) if pin_b else np.flatnonzero(d[a, :] == L + d[b, :])
        tsub = T[np.ix_(xs, ys)]
        if not tsub.any():
            return False
        aligned = d[np.ix_(xs, ys)] == d[xs, a][:, None] + L + d[b, ys][None, :]
        return bool((aligned & tsub).any())

    def thin(self, a: int, b: int, center, radius: HalfInt, pin_a=False, pin_b=False) -> bool:
        return not self.violated(a, b, self.transit(center, radius), pin_a, pin_b)
