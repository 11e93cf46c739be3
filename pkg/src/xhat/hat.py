"""Contraction gauges, separation witnesses and the hat graph.

A pair (x, y) is separated when some geodesic between them contains a
subsegment that is at least K(r) long and r-thin (THIN mode) or
r-quadrangle-contracting (QUAD mode).  Pairs that are not separated are
anti-contracting and receive a unit cone edge in the hat graph.
"""

from __future__ import annotations

import enum
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .contraction import center_key, engine_for, midpoints
from .errors import InputError
from .graph import (Center, DistanceMatrix, HalfInt, MetricGraph, Segment,
                    all_pairs_distances, bfs_rows, format_graph, interval,
                    parse_graph_lines)
from .pieces import PieceAnalyzer

log = logging.getLogger("xhat.progress")


class Mode(str, enum.Enum):
    THIN = "thin"
    QUAD = "quad"

    @classmethod
    def parse(cls, text) -> "Mode":
        if isinstance(text, Mode):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise InputError(f"unknown mode {text!r} (expected thin or quad)") from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise InputError(f"bad number {text!r} in gauge spec") from None


@dataclass(frozen=True)
class ContractionGauge:
    """K(r) = a·r + b, optionally cut off to ∞ from a threshold radius on."""

    slope: Fraction = Fraction(10)
    intercept: Fraction = Fraction(1)
    threshold: HalfInt | None = None

    def __post_init__(self):
        object.__setattr__(self, "slope", Fraction(self.slope))
        object.__setattr__(self, "intercept", Fraction(self.intercept))
        if self.threshold is not None:
            object.__setattr__(self, "threshold", HalfInt.of(self.threshold))
        # a·r + b ≥ 4r + 1 for every r ≥ 0 holds iff a ≥ 4 and b ≥ 1.
        if self.slope < 4 or self.intercept < 1:
            raise InputError(
                f"gauge {self.spec()} violates K(r) >= 4r+1 (needs slope >= 4, intercept >= 1)")

    @property
    def kind(self) -> str:
        return "affine" if self.threshold is None else "partial"

    def full(self) -> bool:
        return self.threshold is None

    def __call__(self, r) -> int | float:
        r = HalfInt.of(r)
        if self.threshold is not None and r >= self.threshold:
            return math.inf
        return math.ceil(self.slope * r.value + self.intercept)

    def r_cap(self, length: int) -> HalfInt | None:
        """Largest half-integer r with K(r) ≤ length, or None."""
        if length < self.intercept:
            return None
        doubled = math.floor(2 * (length - self.intercept) / self.slope)
        if self.threshold is not None:
            doubled = min(doubled, self.threshold.doubled - 1)
            if doubled < 0:
                return None
        return HalfInt(doubled)

    def at_least(self, other: "ContractionGauge", r_limit: int = 64) -> bool:
        """Pointwise K ≥ other on the half grid up to r_limit."""
        return all(self(HalfInt(k)) >= other(HalfInt(k)) for k in range(2 * r_limit + 1))

    def spec(self) -> str:
        if self.threshold is None:
            return f"affine:{self.slope}:{self.intercept}"
        return f"partial:{self.threshold.doubled}:{self.slope}:{self.intercept}"

    @classmethod
    def parse(cls, text: str) -> "ContractionGauge":
        parts = str(text).split(":")
        if parts[0] == "affine" and len(parts) == 3:
            return cls(_fraction(parts[1]), _fraction(parts[2]))
        if parts[0] == "partial" and len(parts) == 4:
            if not parts[1].isdigit():
                raise InputError(f"bad threshold {parts[1]!r} in gauge spec")
            return cls(_fraction(parts[2]), _fraction(parts[3]), HalfInt(int(parts[1])))
        raise InputError(f"bad gauge spec {text!r} (affine:A:B or partial:R0x2:A:B)")


DEFAULT_GAUGE = ContractionGauge()


def gauge_eval(K: ContractionGauge, r) -> int | float:
    return K(r)


@dataclass(frozen=True)
class SeparationWitness:
    p: int
    q: int
    midpoint: Center
    radius: HalfInt
    x: int
    y: int
    path: tuple[int, ...] | None = None


def _segment_midpoint(path: Sequence[int]) -> Center:
    return Segment(tuple(path)).midpoint


def qc_path(neighbors, d: np.ndarray, p: int, q: int, r: HalfInt,
            thin: Callable[[int, int, Center, HalfInt], bool]) -> tuple[int, ...] | None:
    """A geodesic p→q that is r-quadrangle-contracting, or None.

    Walks the geodesic DAG keeping the last L0+1 vertices as state and checks
    each new window of length L0 and L0+1 (see is_quadrangle_contracting).
    Among surviving paths the lexicographically smallest is returned.
    """
    ell = int(d[p, q])
    L0 = max((3 * r.doubled + 1) // 2, 1)
    keep = L0 + 1
    frontier: dict[tuple, tuple] = {(p,): (p,)}
    for step in range(1, ell + 1):
        nxt: dict[tuple, tuple] = {}
        for state in sorted(frontier):
            full = frontier[state]
            cur = state[-1]
            for w in neighbors[cur]:
                if d[w, q] != d[cur, q] - 1:
                    continue
                window = state + (w,)
                ok = True
                for L in (L0, L0 + 1):
                    if step >= L and len(window) >= L + 1:
                        sub = window[-(L + 1):]
                        if not thin(sub[0], sub[-1], _segment_midpoint(sub), r):
                            ok = False
                            break
                if ok:
                    key = window[-keep:]
                    if key not in nxt:
                        nxt[key] = full + (w,)
        frontier = nxt
        if not frontier:
            return None
    return min(frontier.values()) if frontier else None


def _global_thin(g: MetricGraph):
    eng = engine_for(g)
    return eng.thin


def _quad_min_radius(g, d, p, q, r_cap: HalfInt, thin):
    for k in range(r_cap.doubled + 1):
        path = qc_path(g.neighbors, d, p, q, HalfInt(k), thin)
        if path is not None:
            return HalfInt(k), path
    return None, None


def is_separated(g: MetricGraph, D: DistanceMatrix, x: int, y: int,
                 K: ContractionGauge = DEFAULT_GAUGE, mode=Mode.THIN) -> SeparationWitness | None:
    """First witness in lexicographic (p, q, midpoint) order, or None."""
    if x == y:
        raise InputError("separation needs two distinct vertices")
    mode = Mode.parse(mode)
    eng = engine_for(g)
    arr = D.array
    total = arr[x, y]
    span = sorted(interval(D, x, y))
    for p in span:
        for q in span:
            if p == q or arr[x, p] + arr[p, q] + arr[q, y] != total:
                continue
            rc = K.r_cap(int(arr[p, q]))
            if rc is None:
                continue
            if mode is Mode.THIN:
                for mid in midpoints(D, g, p, q):
                    if eng.thin(p, q, mid, rc):
                        r = eng.min_radius(p, q, mid, rc)
                        return SeparationWitness(p, q, mid, r, x, y)
            else:
                r, path = _quad_min_radius(g, arr, p, q, rc, eng.thin)
                if path is not None:
                    return SeparationWitness(p, q, _segment_midpoint(path), r, x, y, path)
    return None


# ---------------------------------------------------------------------------
# Sweeps


def _triples_by_ball(d: np.ndarray, edges, K: ContractionGauge):
    """Group candidate (p, q) pairs by (midpoint, r_cap) within one piece."""
    n = d.shape[0]
    maxd = int(d.max()) if n else 0
    rc = np.array([-1 if K.r_cap(l) is None else K.r_cap(l).doubled
                   for l in range(maxd + 1)], dtype=np.int64)
    groups: dict[tuple, list[tuple[int, int]]] = {}

    def add(center, ps, qs):
        if ps.size == 0:
            return
        rr = rc[d[ps, qs]]
        for p, q, r in zip(ps.tolist(), qs.tolist(), rr.tolist()):
            if r >= 0:
                groups.setdefault((center, r), []).append((min(p, q), max(p, q)))

    for c in range(n):
        dc = d[c]
        m = (dc[:, None] == dc[None, :]) & (d == 2 * dc[:, None]) & (dc[:, None] > 0)
        ps, qs = np.nonzero(np.triu(m, 1))
        add(c, ps, qs)
    for u, w in edges:
        du, dw = d[u], d[w]
        P = np.flatnonzero(du + 1 == dw)
        Q = np.flatnonzero(dw + 1 == du)
        if P.size == 0 or Q.size == 0:
            continue
        m = (d[np.ix_(P, Q)] == du[P][:, None] + 1 + dw[Q][None, :]) & (du[P][:, None] == dw[Q][None, :])
        i, j = np.nonzero(m)
        add((u, w), P[i], Q[j])
    return groups


def _run_groups(an: PieceAnalyzer, groups, workers: int) -> np.ndarray:
    """Mark (p, q) good when it is thin at its cap radius around its center.

    Each center is processed from its largest radius down.  A pair that is
    not thin at some radius is not thin at any smaller one, so a transit
    matrix is only computed while some pair at that radius is still open.
    """
    n = an.n
    good = np.zeros((n, n), dtype=bool)
    by_center: dict = {}
    for center, r in groups:
        by_center.setdefault(center, {})[r] = groups[(center, r)]
    centers = sorted(by_center, key=str)
    lock = threading.Lock()

    def work(chunk):
        for center in chunk:
            levels = by_center[center]
            radii = sorted(levels, reverse=True)
            dead: set = set()
            for k, r in enumerate(radii):
                pending = [pq for pq in levels[r] if pq not in dead and not good[pq]]
                if not pending:
                    continue
                T = an.compute_transit(center, HalfInt(r))
                hits = [pq for pq in pending if not an.violated(pq[0], pq[1], T)]
                if hits:
                    with lock:
                        for p, q in hits:
                            good[p, q] = good[q, p] = True
                for lower in radii[k + 1:]:
                    for pq in levels[lower]:
                        if pq not in dead and an.violated(pq[0], pq[1], T):
                            dead.add(pq)

    if workers <= 1 or len(centers) < 2:
        work(centers)
    else:
        chunks = [centers[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    return good


def separated_closure(d: np.ndarray, good: np.ndarray) -> np.ndarray:
    """S(x, y): some good pair (p, q) is aligned inside [x, y] as x–p–q–y."""
    n = d.shape[0]
    H = np.zeros((n, n), dtype=bool)
    for q in range(n):
        P = np.flatnonzero(good[:, q])
        if P.size:
            H[:, q] = (d[:, P] + d[P, q][None, :] == d[:, q][:, None]).any(axis=1)
    S = np.zeros((n, n), dtype=bool)
    for x in range(n):
        Q = np.flatnonzero(H[x])
        if Q.size:
            S[x] = (d[x, Q][:, None] + d[Q, :] == d[x, :][None, :]).any(axis=0)
    return S | S.T


def _quad_good(neighbors, d: np.ndarray, K: ContractionGauge, thin, pairs=None) -> np.ndarray:
    n = d.shape[0]
    good = np.zeros((n, n), dtype=bool)
    todo = pairs if pairs is not None else ((p, q) for p in range(n) for q in range(p + 1, n))
    for p, q in todo:
        rc = K.r_cap(int(d[p, q]))
        if rc is None:
            continue
        if qc_path(neighbors, d, p, q, rc, thin) is not None:
            good[p, q] = good[q, p] = True
    return good


_PIECE_RESULTS: dict[tuple, np.ndarray] = {}
_PIECE_LOCK = threading.Lock()


def _piece_separated(an: PieceAnalyzer, K: ContractionGauge, mode: Mode, workers: int) -> np.ndarray:
    """Separated-pair matrix for pairs inside one piece (local indices)."""
    key = (an.n, an.graph.edges, K, mode)
    hit = _PIECE_RESULTS.get(key)
    if hit is not None:
        return hit
    if mode is Mode.THIN:
        good = _run_groups(an, _triples_by_ball(an.d, an.graph.edges, K), workers)
    else:
        good = _quad_good(an.graph.neighbors, an.d, K,
                          lambda a, b, c, r: an.thin(a, b, c, r))
    S = separated_closure(an.d, good)
    S.setflags(write=False)
    with _PIECE_LOCK:
        if len(_PIECE_RESULTS) > 4096:
            _PIECE_RESULTS.clear()
        _PIECE_RESULTS[key] = S
    return S


def _global_good(g: MetricGraph, D: DistanceMatrix, K: ContractionGauge, mode: Mode,
                 local_good: dict[int, np.ndarray]) -> np.ndarray:
    """Good-pair table over the whole graph (needed when K(0) > 1 and bridges exist)."""
    eng = engine_for(g)
    st = eng.structure
    d = D.array
    n = g.vertex_count
    good = np.zeros((n, n), dtype=bool)
    for piece, lg in local_good.items():
        verts = st.pieces[piece]
        good[np.ix_(verts, verts)] = lg
    cross = [(p, q) for p in range(n) for q in range(p + 1, n)
             if st.piece_of[p] != st.piece_of[q]]
    if mode is Mode.THIN:
        for p, q in cross:
            rc = K.r_cap(int(d[p, q]))
            if rc is None:
                continue
            if any(eng.thin(p, q, mid, rc) for mid in midpoints(D, g, p, q)):
                good[p, q] = good[q, p] = True
    else:
        good |= _quad_good(g.neighbors, d, K, eng.thin, cross)
    return good


def _piece_good_matrix(an: PieceAnalyzer, K, mode, workers) -> np.ndarray:
    if mode is Mode.THIN:
        return _run_groups(an, _triples_by_ball(an.d, an.graph.edges, K), workers)
    return _quad_good(an.graph.neighbors, an.d, K, lambda a, b, c, r: an.thin(a, b, c, r))


def anti_contracting_pairs(g: MetricGraph, D: DistanceMatrix | None = None,
                           K: ContractionGauge = DEFAULT_GAUGE, mode=Mode.THIN,
                           workers: int = 1) -> frozenset[tuple[int, int]]:
    """All unordered pairs u < v that admit no separation witness.

    Pairs in different bridgeless pieces are joined across a bridge.  When
    K(0) ≤ 1 that bridge alone is a 0-thin witness of length 1, so only pairs
    inside a piece need work; each piece is swept on its own because
    geodesics between its vertices never leave it.
    """
    mode = Mode.parse(mode)
    eng = engine_for(g)
    st = eng.structure
    n = g.vertex_count
    cheap_cross = K(HalfInt(0)) <= 1
    out: set[tuple[int, int]] = set()
    local_good: dict[int, np.ndarray] = {}
    for piece, verts in enumerate(st.pieces):
        if len(verts) < 2:
            continue
        an = eng.analyzer(piece)
        log.debug("sweeping piece %d (%d vertices)", piece, len(verts))
        if cheap_cross:
            S = _piece_separated(an, K, mode, workers)
            us, vs = np.nonzero(np.triu(~S, 1))
            out.update(zip(verts[us].tolist(), verts[vs].tolist()))
        else:
            local_good[piece] = _piece_good_matrix(an, K, mode, workers)
    if not cheap_cross:
        if len(st.pieces) == 1:
            S = separated_closure(eng.analyzer(0).d, local_good.get(0, np.zeros((n, n), bool)))
        else:
            D = D if D is not None else all_pairs_distances(g)
            S = separated_closure(D.array, _global_good(g, D, K, mode, local_good))
        us, vs = np.nonzero(np.triu(~S, 1))
        out = set(zip(us.tolist(), vs.tolist()))
    return frozenset((int(u), int(v)) for u, v in out)


# ---------------------------------------------------------------------------
# Hat graph


@dataclass(frozen=True)
class HatGraph:
    base: MetricGraph
    cone_edges: tuple[tuple[int, int], ...]
    mode: Mode
    gauge: ContractionGauge

    def __post_init__(self):
        object.__setattr__(self, "cone_edges", tuple(sorted(
            ((u, v) if u < v else (v, u)) for u, v in self.cone_edges)))
        object.__setattr__(self, "mode", Mode.parse(self.mode))

    @property
    def adjacency(self) -> sp.csr_matrix:
        cached = self.__dict__.get("_adj")
        if cached is not None:
            return cached
        n = self.base.vertex_count
        pairs = set(self.base.edges) | set(self.cone_edges)
        if pairs:
            e = np.asarray(sorted(pairs), dtype=np.int64)
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        else:
            adj = sp.csr_matrix((n, n), dtype=np.int8)
        self.__dict__["_adj"] = adj
        return adj

    def graph(self) -> MetricGraph:
        """The hat as a plain graph (base edges plus cone edges, deduplicated)."""
        return MetricGraph.from_edges(self.base.vertex_count,
                                      set(self.base.edges) | set(self.cone_edges))


def build_hat(g: MetricGraph, D: DistanceMatrix | None = None,
              K: ContractionGauge = DEFAULT_GAUGE, mode=Mode.THIN, workers: int = 1) -> HatGraph:
    mode = Mode.parse(mode)
    pairs = anti_contracting_pairs(g, D, K, mode, workers)
    return HatGraph(g, tuple(sorted(pairs)), mode, K)


def hat_distances(hat: HatGraph) -> DistanceMatrix:
    rows = bfs_rows(hat.base, np.arange(hat.base.vertex_count), hat.adjacency)
    return DistanceMatrix(rows)


def hat_rows(hat: HatGraph, sources: Iterable[int]) -> np.ndarray:
    return bfs_rows(hat.base, np.asarray(list(sources), dtype=np.int64), hat.adjacency)


def hat_diameter(hat: HatGraph, chunk: int = 512) -> int:
    """Vertex diameter of the hat graph without holding the full table."""
    n = hat.base.vertex_count
    best = 0
    for start in range(0, n, chunk):
        rows = hat_rows(hat, range(start, min(n, start + chunk)))
        best = max(best, int(rows.max()))
    return best


class WitnessTable:
    """Witnesses and minimal separation radii, sharing the graph's r_min cache."""

    def __init__(self, g: MetricGraph, D: DistanceMatrix, K: ContractionGauge = DEFAULT_GAUGE,
                 mode=Mode.THIN):
        self.g, self.D, self.K, self.mode = g, D, K, Mode.parse(mode)
        self._pairs: dict[tuple[int, int], tuple] = {}

    def lookup(self, x: int, y: int) -> tuple[HalfInt | None, SeparationWitness | None]:
        key = (x, y)
        hit = self._pairs.get(key)
        if hit is None:
            hit = (self.separation_radius(x, y), is_separated(self.g, self.D, x, y, self.K, self.mode))
            self._pairs[key] = hit
        return hit

    def separation_radius(self, x: int, y: int) -> HalfInt | None:
        """Least r such that x, y are separated by a witness of radius r."""
        g, D, K = self.g, self.D, self.K
        eng = engine_for(g)
        arr = D.array
        total = arr[x, y]
        span = sorted(interval(D, x, y))
        triples = []
        for p in span:
            for q in span:
                if p != q and arr[x, p] + arr[p, q] + arr[q, y] == total:
                    rc = K.r_cap(int(arr[p, q]))
                    if rc is not None:
                        triples.append((int(arr[p, q]), p, q, rc))
        triples.sort()
        best: HalfInt | None = None
        for _, p, q, rc in triples:
            if best is not None:
                if best.doubled == 0:
                    break
                rc = min(rc, HalfInt(best.doubled - 1))
            if self.mode is Mode.THIN:
                found = [eng.min_radius(p, q, mid, rc) for mid in midpoints(D, g, p, q)]
                found = [r for r in found if r is not None]
                r = min(found) if found else None
            else:
                r, _ = _quad_min_radius(g, arr, p, q, rc, eng.thin)
            if r is not None and (best is None or r < best):
                best = r
        return best


def witness_table(g: MetricGraph, D: DistanceMatrix, K: ContractionGauge = DEFAULT_GAUGE,
                  mode=Mode.THIN) -> WitnessTable:
    return WitnessTable(g, D, K, mode)


def format_hat(hat: HatGraph) -> str:
    header = (f"hatgraph v1 {hat.base.vertex_count} {hat.mode.value} {hat.gauge.spec()}")
    body = format_graph(hat.base, header)
    return body + "".join(f"c {u} {v}\n" for u, v in hat.cone_edges)


def parse_hat(text: str) -> HatGraph:
    lines = text.splitlines()
    if not lines:
        raise InputError("line 1: empty hat file")
    head = lines[0].split()
    if len(head) != 5 or head[:2] != ["hatgraph", "v1"] or not head[2].isdigit():
        raise InputError("line 1: expected header 'hatgraph v1 <n> <mode> <gauge-spec>'")
    try:
        mode = Mode.parse(head[3])
        gauge = ContractionGauge.parse(head[4])
    except InputError as exc:
        raise InputError(f"line 1: {exc}") from None
    cones = []

    def extra(kind, rest, lineno):
        if kind != "c":
            raise InputError(f"unknown record '{kind}'")
        u, v = rest.split()
        cones.append((int(u), int(v)))

    base = parse_graph_lines(lines[1:], int(head[2]), extra=extra)
    n = base.vertex_count
    for u, v in cones:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise InputError(f"bad cone edge ({u}, {v})")
    return HatGraph(base, tuple(cones), mode, gauge)


def read_hat(path) -> HatGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_hat(fh.read())


def write_hat(hat: HatGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_hat(hat))
