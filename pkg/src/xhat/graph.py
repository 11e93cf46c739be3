"""Finite unit-edge graphs as discrete geodesic spaces.

Distances are exact integers.  Radii live on the half-integer grid so that
balls around edge midpoints (the midpoints of odd-length geodesics) can be
expressed without subdividing edges.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import InputError

Center = Union[int, tuple[int, int]]


class _Unreachable:
    """Singleton sentinel for "no path"; never takes part in arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNREACHABLE"

    def __bool__(self) -> bool:
        return False


UNREACHABLE = _Unreachable()


@dataclass(frozen=True, order=True)
class HalfInt:
    """A nonnegative multiple of 1/2, stored doubled."""

    doubled: int

    def __post_init__(self):
        if not isinstance(self.doubled, (int, np.integer)) or self.doubled < 0:
            raise InputError(f"HalfInt needs a nonnegative integer, got {self.doubled!r}")
        object.__setattr__(self, "doubled", int(self.doubled))

    @classmethod
    def of(cls, value) -> "HalfInt":
        """Build from an int, a Fraction/float on the half grid, or text like '3/2'."""
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value)
        frac = Fraction(value) * 2
        if frac.denominator != 1:
            raise InputError(f"{value!r} is not on the half-integer grid")
        return cls(int(frac))

    @property
    def value(self) -> Fraction:
        return Fraction(self.doubled, 2)

    def __add__(self, other: "HalfInt") -> "HalfInt":
        return HalfInt(self.doubled + HalfInt.of(other).doubled)

    def __float__(self) -> float:
        return self.doubled / 2

    def ceil(self) -> int:
        return (self.doubled + 1) // 2

    def __str__(self) -> str:
        return str(self.doubled // 2) if self.doubled % 2 == 0 else f"{self.doubled}/2"


@dataclass(frozen=True)
class MetricGraph:
    """Connected simple undirected graph with unit edges.

    Edges are normalized to sorted ``(u, v)`` pairs with ``u < v`` and kept in
    sorted order, so equal graphs compare and serialize identically.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        n = self.vertex_count
        if n < 1:
            raise InputError("a graph needs at least one vertex")
        norm = set()
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < n and 0 <= v < n):
                raise InputError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
            if u == v:
                raise InputError(f"self-loop at vertex {u}")
            key = (u, v) if u < v else (v, u)
            if key in norm:
                raise InputError(f"duplicate edge {key}")
            norm.add(key)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise InputError("label count differs from vertex count")
            object.__setattr__(self, "labels", labels)
        if n > 1:
            ncomp, comp = connected_components(self.adjacency, directed=False)
            if ncomp > 1:
                other = int(np.flatnonzero(comp != comp[0])[0])
                raise InputError(f"graph is disconnected: no path between 0 and {other}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], labels=None) -> "MetricGraph":
        return cls(n, tuple(tuple(e) for e in edges), None if labels is None else tuple(labels))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.vertex_count
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=np.int8)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj = self.adjacency
        return tuple(
            tuple(int(x) for x in adj.indices[adj.indptr[v]:adj.indptr[v + 1]])
            for v in range(self.vertex_count)
        )

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self.edge_set

    def induced(self, vertices: Sequence[int]) -> tuple["MetricGraph", dict[int, int]]:
        """Induced subgraph on ``vertices`` (relabelled in the given order)."""
        index = {int(v): i for i, v in enumerate(vertices)}
        edges = [(index[u], index[v]) for u, v in self.edges if u in index and v in index]
        return MetricGraph.from_edges(len(index), edges), index


class DistanceMatrix:
    """Read-only integer distance table."""

    __slots__ = ("_a",)

    def __init__(self, array: np.ndarray):
        a = np.array(array, dtype=np.int32, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError("distance table must be square")
        a.setflags(write=False)
        self._a = a

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def n(self) -> int:
        return self._a.shape[0]

    def __getitem__(self, key):
        return self._a[key]

    def __eq__(self, other) -> bool:
        return isinstance(other, DistanceMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def diameter(self) -> int:
        return int(self._a.max()) if self._a.size else 0


def _csgraph_distances(adj: sp.spmatrix, indices=None) -> np.ndarray:
    return shortest_path(adj, directed=False, unweighted=True, indices=indices)


def all_pairs_distances(g: MetricGraph) -> DistanceMatrix:
    """Exact unit-weight shortest-path distances."""
    dist = _csgraph_distances(g.adjacency)
    if not np.isfinite(dist).all():
        u, v = np.argwhere(~np.isfinite(dist))[0]
        raise InputError(f"no path between {u} and {v}")
    return DistanceMatrix(dist.astype(np.int32))


def bfs_rows(g: MetricGraph, sources: Sequence[int], adjacency=None) -> np.ndarray:
    """Distances from each source to every vertex; unreachable entries are -1."""
    adj = g.adjacency if adjacency is None else adjacency
    if len(sources) == 0:
        return np.zeros((0, adj.shape[0]), dtype=np.int32)
    dist = _csgraph_distances(adj, indices=np.asarray(sources, dtype=np.int64))
    out = np.full(dist.shape, -1, dtype=np.int32)
    fin = np.isfinite(dist)
    out[fin] = dist[fin].astype(np.int32)
    return out


def interval(D: DistanceMatrix, x: int, y: int) -> frozenset[int]:
    """Vertices lying on some geodesic from x to y."""
    mask = D[x] + D[y] == D[x, y]
    return frozenset(int(v) for v in np.flatnonzero(mask))


@dataclass(frozen=True)
class Segment:
    """Vertex sequence of a geodesic; validate with :func:`make_segment`."""

    vertices: tuple[int, ...]

    def __post_init__(self):
        if not self.vertices:
            raise InputError("a segment needs at least one vertex")
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def first(self) -> int:
        return self.vertices[0]

    @property
    def last(self) -> int:
        return self.vertices[-1]

    @property
    def midpoint(self) -> Center:
        """Central vertex (even length) or central edge (odd length)."""
        half, odd = divmod(self.length, 2)
        if odd:
            return (self.vertices[half], self.vertices[half + 1])
        return self.vertices[half]

    def sub(self, i: int, j: int) -> "Segment":
        """Contiguous sub-run from position i to position j inclusive."""
        if not 0 <= i <= j < len(self.vertices):
            raise InputError(f"bad sub-run [{i}, {j}] of a length-{self.length} segment")
        return Segment(self.vertices[i:j + 1])

    def __len__(self) -> int:
        return len(self.vertices)


def make_segment(g: MetricGraph, D: DistanceMatrix, vertices: Sequence[int]) -> Segment:
    seg = Segment(tuple(vertices))
    for u, v in zip(seg.vertices, seg.vertices[1:]):
        if not g.has_edge(u, v):
            raise InputError(f"({u}, {v}) is not an edge")
    if D[seg.first, seg.last] != seg.length:
        raise InputError(
            f"sequence of length {seg.length} is not a geodesic "
            f"(d = {D[seg.first, seg.last]})")
    return seg


def some_geodesic(g: MetricGraph, D: DistanceMatrix, x: int, y: int) -> Segment:
    """A geodesic from x to y, stepping to the lowest-id neighbour closer to y."""
    path = [x]
    cur = x
    row = D[y]
    while cur != y:
        cur = next(w for w in g.neighbors[cur] if row[w] == row[cur] - 1)
        path.append(cur)
    return Segment(tuple(path))


def avoidance_distance(g: MetricGraph, forbidden: Iterable[int], a: int, b: int):
    """Distance from a to b inside the subgraph induced on the allowed vertices."""
    banned = set(forbidden)
    if a in banned or b in banned:
        return UNREACHABLE
    dist = {a: 0}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        if v == b:
            return dist[v]
        for w in g.neighbors[v]:
            if w not in dist and w not in banned:
                dist[w] = dist[v] + 1
                queue.append(w)
    return UNREACHABLE


@dataclass(frozen=True)
class Ball:
    """Closed ball around a vertex or an edge midpoint.

    For an edge center at radius 0 no vertex is a member; the ball is then
    just the midpoint of the edge, and a path meets it exactly when it
    traverses that edge.  ``cut_edge`` records this case.
    """

    center: Center
    radius: HalfInt
    members: frozenset[int] = field(compare=False)

    @property
    def cut_edge(self) -> tuple[int, int] | None:
        if isinstance(self.center, tuple) and self.radius.doubled == 0:
            u, w = self.center
            return (u, w) if u < w else (w, u)
        return None

    def member_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[list(self.members)] = True
        return mask


def ball_mask(D: DistanceMatrix | np.ndarray, center: Center, radius: HalfInt) -> np.ndarray:
    """Membership mask of the closed ball, using doubled distances."""
    dd = D if isinstance(D, np.ndarray) else D.array
    if isinstance(center, tuple):
        u, w = center
        return 2 * np.minimum(dd[u], dd[w]) + 1 <= radius.doubled
    return 2 * dd[center] <= radius.doubled


def make_ball(D: DistanceMatrix, center: Center, radius: HalfInt) -> Ball:
    if isinstance(center, (list, tuple)):
        center = (int(center[0]), int(center[1]))
    else:
        center = int(center)
    radius = HalfInt.of(radius)
    members = frozenset(int(v) for v in np.flatnonzero(ball_mask(D, center, radius)))
    return Ball(center, radius, members)


def _removed_adjacency(g: MetricGraph, outside: np.ndarray, cut_edge) -> sp.csr_matrix:
    keep = sp.diags(outside.astype(np.int8))
    adj = (keep @ g.adjacency @ keep).tolil()
    if cut_edge is not None:
        u, w = cut_edge
        adj[u, w] = 0
        adj[w, u] = 0
    adj = adj.tocsr()
    adj.eliminate_zeros()
    return adj


def avoid_relation(g: MetricGraph, D: DistanceMatrix, ball: Ball) -> np.ndarray:
    """A(a, b): a and b lie outside the ball and some geodesic joins them avoiding it."""
    n = g.vertex_count
    outside = ~ball.member_mask(n)
    adj = _removed_adjacency(g, outside, ball.cut_edge)
    dist = _csgraph_distances(adj)
    rel = dist == D.array
    rel &= outside[:, None] & outside[None, :]
    return rel


def relation_triple_compose(A: np.ndarray) -> np.ndarray:
    """Boolean composition A∘A∘A."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("relation must be a square matrix")
    f = A.astype(np.float32)
    two = (f @ f) > 0
    return (two.astype(np.float32) @ f) > 0


def hausdorff_distance(D: DistanceMatrix, S: Iterable[int], T: Iterable[int]) -> int:
    s, t = sorted(set(S)), sorted(set(T))
    if not s or not t:
        raise InputError("Hausdorff distance needs nonempty sets")
    block = D.array[np.ix_(s, t)]
    return int(max(block.min(axis=1).max(), block.min(axis=0).max()))


def validate_convex_embedding(sub: MetricGraph, ambient: MetricGraph,
                              vertex_map: Mapping[int, int] | Sequence[int]) -> list[tuple]:
    """Pairs whose distance in ``sub`` differs from the ambient distance of their images.

    Returns ``(u, v, d_sub, d_ambient)`` tuples with ``u < v``; an empty list
    means the map is an isometric embedding.
    """
    n = sub.vertex_count
    if isinstance(vertex_map, Mapping):
        image = [int(vertex_map[v]) for v in range(n)]
    else:
        image = [int(v) for v in vertex_map]
    if len(image) != n or len(set(image)) != n:
        raise InputError("vertex map is not injective on the subgraph")
    for u, v in sub.edges:
        if not ambient.has_edge(image[u], image[v]):
            raise InputError(f"edge ({u}, {v}) is not mapped to an edge")
    d_sub = all_pairs_distances(sub).array
    d_amb = bfs_rows(ambient, image)[:, image]
    bad = np.argwhere(np.triu(d_sub != d_amb, k=1))
    return [(int(u), int(v), int(d_sub[u, v]), int(d_amb[u, v])) for u, v in bad]


def format_graph(g: MetricGraph, header: str | None = None) -> str:
    lines = [header or f"metricgraph v1 {g.vertex_count}"]
    lines += [f"e {u} {v}" for u, v in g.edges]
    if g.labels is not None:
        lines += [f"l {v} {text}" for v, text in enumerate(g.labels)]
    return "\n".join(lines) + "\n"


def parse_graph_lines(lines: Sequence[str], n: int, start_line: int = 2,
                      extra=None) -> MetricGraph:
    """Parse ``e``/``l`` body lines; other record kinds go to ``extra(kind, parts, lineno)``."""
    edges = []
    labels: dict[int, str] = {}
    for offset, raw in enumerate(lines):
        lineno = start_line + offset
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        kind, _, rest = line.partition(" ")
        try:
            if kind == "e":
                u, v = rest.split()
                edges.append((int(u), int(v)))
            elif kind == "l":
                v, _, text = rest.partition(" ")
                labels[int(v)] = text
            elif extra is not None:
                extra(kind, rest, lineno)
            else:
                raise InputError(f"unknown record '{kind}'")
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        except ValueError:
            raise InputError(f"line {lineno}: malformed '{kind}' record") from None
    label_tuple = None
    if labels:
        if sorted(labels) != list(range(n)):
            raise InputError(f"line {start_line + len(lines)}: "
                             "labels must cover every vertex exactly once")
        label_tuple = tuple(labels[v] for v in range(n))
    try:
        return MetricGraph.from_edges(n, edges, label_tuple)
    except InputError as exc:
        raise InputError(f"line {start_line + len(lines)}: {exc}") from None


def parse_graph(text: str) -> MetricGraph:
    lines = text.splitlines()
    if not lines:
        raise InputError("line 1: empty graph file")
    head = lines[0].split()
    if len(head) != 3 or head[:2] != ["metricgraph", "v1"] or not head[2].isdigit():
        raise InputError("line 1: expected header 'metricgraph v1 <n>'")
    return parse_graph_lines(lines[1:], int(head[2]))


def read_graph(path) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def write_graph(g: MetricGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(g))
