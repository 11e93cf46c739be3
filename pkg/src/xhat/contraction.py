"""Deciders for thinness, quadrangle contraction, strong contraction and
bounded geodesic image on finite graphs.

Thinness of a subsegment only depends on its endpoints and midpoint: a
quadrangle contains some geodesic p→q through the midpoint exactly when its
corners are aligned, d(x, y) = d(x, p) + d(p, q) + d(q, y).  So a query is
the tuple (p, q, midpoint, r) rather than a concrete path.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .graph import (Center, DistanceMatrix, HalfInt, MetricGraph, Segment, bfs_rows,
                    interval)
from .pieces import BridgeStructure, PieceAnalyzer


@dataclass(frozen=True)
class ThinQuery:
    p: int
    q: int
    length: int
    midpoint: Center
    radius: HalfInt


def center_key(center: Center) -> Center:
    if isinstance(center, tuple):
        u, w = center
        return (u, w) if u < w else (w, u)
    return int(center)


def midpoints(D: DistanceMatrix, g: MetricGraph, p: int, q: int) -> list[Center]:
    """All valid midpoints of geodesics p→q, sorted.

    Vertices at distance ℓ/2 from both ends for even ℓ; for odd ℓ the edges
    (u, w) with u at distance (ℓ-1)/2 from p and w at distance (ℓ-1)/2 from q.
    """
    ell = int(D[p, q])
    dp, dq = D[p], D[q]
    if ell % 2 == 0:
        half = ell // 2
        return [int(c) for c in np.flatnonzero((dp == half) & (dq == half))]
    half = (ell - 1) // 2
    out = []
    for u in np.flatnonzero((dp == half) & (dq == half + 1)):
        for w in g.neighbors[int(u)]:
            if dq[w] == half and dp[w] == half + 1:
                out.append((int(u), int(w)))
    return sorted(out)


def make_query(D: DistanceMatrix, p: int, q: int, midpoint: Center, radius) -> ThinQuery:
    ell = int(D[p, q])
    radius = HalfInt.of(radius)
    if isinstance(midpoint, (tuple, list)):
        u, w = int(midpoint[0]), int(midpoint[1])
        if D[p, u] > D[p, w]:
            u, w = w, u
        ok = D[u, w] == 1 and D[p, u] + 1 + D[w, q] == ell and D[p, u] == D[w, q]
        midpoint = (u, w)
    else:
        midpoint = int(midpoint)
        ok = D[p, midpoint] + D[midpoint, q] == ell and D[p, midpoint] == D[midpoint, q]
    if not ok:
        raise InputError(f"{midpoint} is not a midpoint of a geodesic {p}→{q}")
    return ThinQuery(int(p), int(q), ell, midpoint, radius)


class ThinEngine:
    """Cached thinness evaluation for one graph, reduced to bridgeless pieces."""

    def __init__(self, g: MetricGraph):
        self.graph = g
        self.structure = BridgeStructure(g)
        self._analyzers: dict[int, PieceAnalyzer] = {}
        self._thin: dict[tuple, bool] = {}
        self._rmin: dict[tuple, tuple[int | None, int]] = {}
        self._lock = threading.Lock()

    def analyzer(self, piece: int) -> PieceAnalyzer:
        an = self._analyzers.get(piece)
        if an is None:
            verts = self.structure.pieces[piece]
            local, _ = self.graph.induced(verts)
            an = PieceAnalyzer(local)
            with self._lock:
                an = self._analyzers.setdefault(piece, an)
        return an

    def thin(self, p: int, q: int, center: Center, radius: HalfInt) -> bool:
        center = center_key(center)
        a_, b_ = (p, q) if p < q else (q, p)
        key = (a_, b_, center, radius.doubled)
        hit = self._thin.get(key)
        if hit is not None:
            return hit
        result = self._decide(p, q, center, radius)
        self._thin[key] = result
        return result

    def _decide(self, p, q, center, radius) -> bool:
        st = self.structure
        if isinstance(center, tuple):
            if st.is_bridge(*center):
                return True
            anchor = center[0]
        else:
            anchor = center
        piece = int(st.piece_of[anchor])
        a, b = st.gate(piece, p), st.gate(piece, q)
        pin_a = a != p
        pin_b = b != q
        an = self.analyzer(piece)
        li = st.local_index
        if isinstance(center, tuple):
            lc = (int(li[center[0]]), int(li[center[1]]))
        else:
            lc = int(li[center])
        return an.thin(int(li[a]), int(li[b]), lc, radius, pin_a, pin_b)

    def min_radius(self, p: int, q: int, center: Center, r_max: HalfInt) -> HalfInt | None:
        """Least r ≤ r_max with the query thin, by binary search (thinness is monotone in r)."""
        center = center_key(center)
        a_, b_ = (p, q) if p < q else (q, p)
        key = (a_, b_, center)
        known = self._rmin.get(key)
        if known is not None:
            value, cap = known
            if value is not None and value <= r_max.doubled:
                return HalfInt(value)
            if value is not None or cap >= r_max.doubled:
                return None
        if not self.thin(p, q, center, r_max):
            with self._lock:
                prev = self._rmin.get(key)
                if prev is None or (prev[0] is None and prev[1] < r_max.doubled):
                    self._rmin[key] = (None, r_max.doubled)
            return None
        lo, hi = 0, r_max.doubled
        while lo < hi:
            mid = (lo + hi) // 2
            if self.thin(p, q, center, HalfInt(mid)):
                hi = mid
            else:
                lo = mid + 1
        self._rmin[key] = (lo, r_max.doubled)
        return HalfInt(lo)

    def rmin_records(self) -> dict[tuple, tuple[int | None, int]]:
        return dict(self._rmin)

    def seed_rmin(self, records: dict[tuple, tuple[int | None, int]]) -> None:
        for key, val in records.items():
            self._rmin.setdefault(key, val)


_ENGINE_LOCK = threading.Lock()


def engine_for(g: MetricGraph) -> ThinEngine:
    """The graph's shared engine (created once, stored on the graph object)."""
    eng = g.__dict__.get("_thin_engine")
    if eng is None:
        with _ENGINE_LOCK:
            eng = g.__dict__.get("_thin_engine")
            if eng is None:
                eng = ThinEngine(g)
                g.__dict__["_thin_engine"] = eng
    return eng


def is_thin(g: MetricGraph, D: DistanceMatrix, query: ThinQuery) -> bool:
    return engine_for(g).thin(query.p, query.q, query.midpoint, query.radius)


def min_thin_radius(g: MetricGraph, D: DistanceMatrix, p: int, q: int, midpoint: Center,
                    r_max) -> HalfInt | None:
    make_query(D, p, q, midpoint, r_max)
    return engine_for(g).min_radius(p, q, midpoint, HalfInt.of(r_max))


def is_thin_segment(g: MetricGraph, D: DistanceMatrix, seg: Segment, radius) -> bool:
    """Thinness of a concrete segment with its own midpoint."""
    return engine_for(g).thin(seg.first, seg.last, seg.midpoint, HalfInt.of(radius))


@dataclass(frozen=True)
class ProjectionTable:
    """Nearest-point projection onto a segment.

    ``members[v]`` lists the positions (indices along the segment) of the
    nearest segment vertices; ``lo``/``hi`` are their extreme positions.
    """

    segment: Segment
    dist: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mask: np.ndarray

    def members(self, v: int) -> tuple[int, ...]:
        return tuple(self.segment.vertices[i] for i in np.flatnonzero(self.mask[v]))

    def positions(self, v: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.mask[v]))


def projection_table(g: MetricGraph, D: DistanceMatrix | np.ndarray, seg: Segment) -> ProjectionTable:
    rows = _seg_rows(D, seg)
    dist = rows.min(axis=0)
    mask = (rows == dist[None, :]).T
    pos = np.arange(len(seg))
    lo = np.where(mask, pos[None, :], len(seg)).min(axis=1)
    hi = np.where(mask, pos[None, :], -1).max(axis=1)
    for arr in (dist, lo, hi, mask):
        arr.setflags(write=False)
    return ProjectionTable(seg, dist, lo, hi, mask)


def _seg_rows(D, seg: Segment) -> np.ndarray:
    """Distance rows of the segment vertices, shape (len(seg), n)."""
    arr = D if isinstance(D, np.ndarray) else D.array
    if arr.shape[0] == arr.shape[1]:
        return np.asarray(arr[list(seg.vertices)])
    return np.asarray(arr)


def projection_halfdist_audit(g: MetricGraph, D: DistanceMatrix, seg: Segment,
                              sample: Iterable[int] | None = None) -> list[dict]:
    """Check d(y, z) ≥ d(y, x')/2 for x' ∈ π(x), y on seg, z between x and x'."""
    table = projection_table(g, D, seg)
    xs = range(g.vertex_count) if sample is None else sorted(set(sample))
    seg_idx = np.asarray(seg.vertices)
    violations = []
    arr = D.array
    for x in xs:
        for xp in table.members(x):
            between = np.flatnonzero(arr[x] + arr[xp] == arr[x, xp])
            lhs = 2 * arr[np.ix_(seg_idx, between)]
            rhs = arr[seg_idx, xp][:, None]
            for i, j in np.argwhere(lhs < rhs):
                violations.append({"x": int(x), "x_proj": int(xp), "y": int(seg_idx[i]),
                                   "z": int(between[j])})
    return violations


def _ball_projection_spread(D, seg: Segment, table: ProjectionTable) -> np.ndarray:
    """For each v, the projection diameter of {u : d(u, v) ≤ d(v, seg) - 1}."""
    arr = D.array
    n = arr.shape[0]
    spread = np.zeros(n, dtype=np.int64)
    lo, hi = table.lo, table.hi
    for v in range(n):
        inside = arr[v] <= table.dist[v] - 1
        if inside.any():
            spread[v] = hi[inside].max() - lo[inside].min()
    return spread


def is_contracting(g: MetricGraph, D: DistanceMatrix, seg: Segment, C: int) -> bool:
    return min_contraction(g, D, seg) <= C


def min_contraction(g: MetricGraph, D: DistanceMatrix, seg: Segment) -> int:
    table = projection_table(g, D, seg)
    spread = _ball_projection_spread(D, seg, table)
    return int(spread.max()) if spread.size else 0


def has_bgi(g: MetricGraph, D: DistanceMatrix, seg: Segment, C: int) -> bool:
    """Bounded geodesic image with constant C.

    Fails exactly when two vertices u, w at distance ≥ C from the segment
    are joined by a geodesic staying at distance ≥ C and their projections
    spread over more than C.
    """
    if C >= seg.length:
        return True
    table = projection_table(g, D, seg)
    far = np.flatnonzero(table.dist >= C)
    if far.size == 0:
        return True
    lo, hi = table.lo[far], table.hi[far]
    gap = np.maximum(hi[:, None], hi[None, :]) - np.minimum(lo[:, None], lo[None, :])
    if not (gap > C).any():
        return True
    if far.size < g.vertex_count:
        sub_adj = g.adjacency[far][:, far]
        inner = bfs_rows(g, np.arange(far.size), sub_adj)
    else:
        inner = D.array
    direct = D.array[np.ix_(far, far)]
    return not ((inner == direct) & (gap > C)).any()


def bgi_constant(g: MetricGraph, D: DistanceMatrix, seg: Segment) -> int:
    """Least C with has_bgi; has_bgi is monotone in C and holds at C = length."""
    for C in range(seg.length + 1):
        if has_bgi(g, D, seg, C):
            return C
    return seg.length


def is_quadrangle_contracting(g: MetricGraph, D: DistanceMatrix, seg: Segment, r) -> bool:
    """Every subsegment of length ≥ max(⌈3r⌉, 1) is r-thin.

    Only windows of length L0 and L0+1 are checked: a longer window contains
    the centered window of the matching parity, with the same midpoint, and
    thinness passes from a segment to its symmetric extensions.
    """
    r = HalfInt.of(r)
    eng = engine_for(g)
    L0 = max((3 * r.doubled + 1) // 2, 1)
    verts = seg.vertices
    for L in (L0, L0 + 1):
        for i in range(0, seg.length - L + 1):
            sub = Segment(verts[i:i + L + 1])
            if not eng.thin(sub.first, sub.last, sub.midpoint, r):
                return False
    return True


def qc_radius(g: MetricGraph, D: DistanceMatrix, seg: Segment) -> HalfInt:
    """Least r on the half grid with the segment r-quadrangle-contracting.

    Always finite: once ⌈3r⌉ exceeds the length the condition is vacuous.
    """
    top = 2 * seg.length // 3 + 2
    lo, hi = 0, top
    while lo < hi:
        mid = (lo + hi) // 2
        if is_quadrangle_contracting(g, D, seg, HalfInt(mid)):
            hi = mid
        else:
            lo = mid + 1
    return HalfInt(lo)


@dataclass(frozen=True)
class EquivalenceReport:
    r_star: HalfInt
    bgi_constant: int
    contraction_constant: int
    implied_bgi: int
    passed: bool


def equivalence_audit(g: MetricGraph, D: DistanceMatrix, seg: Segment) -> EquivalenceReport:
    """r-quadrangle-contracting implies (4r+1)-bounded geodesic image."""
    r_star = qc_radius(g, D, seg)
    implied = 2 * r_star.doubled + 1
    return EquivalenceReport(
        r_star=r_star,
        bgi_constant=bgi_constant(g, D, seg),
        contraction_constant=min_contraction(g, D, seg),
        implied_bgi=implied,
        passed=has_bgi(g, D, seg, implied),
    )


def segment_windows(seg: Segment, lengths: Sequence[int]):
    for L in lengths:
        for i in range(0, seg.length - L + 1):
            yield seg.sub(i, i + L)


__all__ = [
    "ThinQuery", "ProjectionTable", "EquivalenceReport", "ThinEngine", "engine_for",
    "make_query", "midpoints", "is_thin", "min_thin_radius", "is_thin_segment",
    "projection_table", "projection_halfdist_audit", "is_contracting", "min_contraction",
    "has_bgi", "bgi_constant", "is_quadrangle_contracting", "qc_radius",
    "equivalence_audit", "interval",
]
