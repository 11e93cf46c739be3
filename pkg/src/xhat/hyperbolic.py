"""Hyperbolicity measurements and the quantitative audits on hat graphs.

Every audit returns plain data (violations, fitted constants) and never
raises on a failed check; callers decide what counts as a failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .contraction import has_bgi
from .errors import InputError
from .graph import DistanceMatrix, MetricGraph, Segment, all_pairs_distances, some_geodesic
from .hat import (DEFAULT_GAUGE, ContractionGauge, HatGraph, Mode, WitnessTable, build_hat,
                  hat_diameter)

EXHAUSTIVE_LIMIT = 60
DEFAULT_DELTA_SAMPLES = 200_000
DEFAULT_Q_CAP = Fraction(4)


def _array(D) -> np.ndarray:
    return D.array if isinstance(D, DistanceMatrix) else np.asarray(D)


@dataclass(frozen=True)
class DeltaReport:
    delta: Fraction
    quadruple: tuple[int, int, int, int] | None
    sample: str


def _defects(d, x, y, z, w) -> np.ndarray:
    """Doubled four-point defect: largest minus middle of the three pair sums."""
    s = np.stack([d[x, y] + d[z, w], d[x, z] + d[y, w], d[x, w] + d[y, z]]).astype(np.int64)
    s.sort(axis=0)
    return s[2] - s[1]


def four_point_delta(D, samples: int | None = None, seed: int = 0,
                     exhaustive: bool | None = None) -> DeltaReport:
    """Largest four-point defect, exactly for small graphs and sampled otherwise."""
    d = _array(D)
    n = d.shape[0]
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_LIMIT
    best, arg = -1, None
    if exhaustive:
        z, w = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        z, w = z.ravel(), w.ravel()
        for x in range(n):
            for y in range(n):
                gaps = _defects(d, x, y, z, w)
                k = int(np.argmax(gaps))
                if gaps[k] > best:
                    best, arg = int(gaps[k]), (x, y, int(z[k]), int(w[k]))
        desc = f"exhaustive ({n ** 4} quadruples)"
    else:
        samples = samples or DEFAULT_DELTA_SAMPLES
        rng = np.random.default_rng(seed)
        q = rng.integers(0, n, size=(samples, 4))
        gaps = _defects(d, q[:, 0], q[:, 1], q[:, 2], q[:, 3])
        k = int(np.argmax(gaps))
        best, arg = int(gaps[k]), tuple(int(v) for v in q[k])
        desc = f"sampled {samples} quadruples, seed {seed}"
    return DeltaReport(Fraction(max(best, 0), 2), arg, desc)


def seeded_triples(candidates: Sequence[int], count: int, seed: int) -> list[tuple[int, int, int]]:
    rng = np.random.default_rng(seed)
    c = np.asarray(candidates)
    picks = rng.integers(0, len(c), size=(count, 3))
    return [tuple(int(v) for v in c[row]) for row in picks]


def triangle_one_thin_audit(g: MetricGraph, D, hatD, triples: Iterable[tuple[int, int, int]]) -> list[dict]:
    """Each side of a geodesic triangle lies within hat distance 1 of the other two."""
    D = D if isinstance(D, DistanceMatrix) else DistanceMatrix(D)
    h = _array(hatD)
    out = []
    for x, y, z in triples:
        sides = [some_geodesic(g, D, x, y).vertices, some_geodesic(g, D, y, z).vertices,
                 some_geodesic(g, D, z, x).vertices]
        for i, side in enumerate(sides):
            others = np.fromiter(set(sides[(i + 1) % 3]) | set(sides[(i + 2) % 3]), dtype=np.int64)
            near = h[np.ix_(np.asarray(side), others)].min(axis=1)
            for v, gap in zip(side, near.tolist()):
                if gap > 1:
                    out.append({"triangle": [x, y, z], "side": i, "vertex": v, "hat_gap": gap})
    return out


def _min_k_lower(n: np.ndarray, h: np.ndarray) -> int:
    """Least k ≥ 4 with 16 n ≤ k (4 h + k) for every pair, i.e. n/L − L ≤ h at L = k/4."""
    n = n.astype(np.int64)
    h = h.astype(np.int64)
    est = np.ceil(2 * (np.sqrt(h.astype(float) ** 2 + 4 * n) - h)).astype(np.int64)
    est = np.maximum(est - 1, 0)
    while True:
        bad = 16 * n > est * (4 * h + est)
        if not bad.any():
            break
        est = est + bad
    return max(4, int(est.max(initial=0)))


def _min_k_upper(n: np.ndarray, h: np.ndarray) -> int:
    """Least k with 4 h ≤ k (n + 1), i.e. h ≤ L n + L at L = k/4."""
    n = n.astype(np.int64)
    h = h.astype(np.int64)
    return int((-(-4 * h // (n + 1))).max(initial=0))


@dataclass(frozen=True)
class QGFit:
    Q: Fraction
    worst: tuple[int, int] | None


def qg_fit(hatD, seg: Segment) -> QGFit:
    """Least Q on the 1/4 grid with |t − s|/Q − Q ≤ d̂(γ(s), γ(t)) along the segment."""
    h = _array(hatD)
    idx = np.asarray(seg.vertices)
    s, t = np.triu_indices(len(idx), 1)
    if s.size == 0:
        return QGFit(Fraction(1), None)
    n = t - s
    hv = h[idx[s], idx[t]]
    k = _min_k_lower(n, hv)
    worst = None
    if k > 4:
        slack = 16 * n - (k - 1) * (4 * hv.astype(np.int64) + (k - 1))
        i = int(np.argmax(slack))
        worst = (int(s[i]), int(t[i]))
    return QGFit(Fraction(k, 4), worst)


@dataclass(frozen=True)
class AuditResult:
    """One audit outcome: status is 'pass', 'fail' or 'not-applicable'."""

    name: str
    status: str
    constants: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)


def bgi_from_Q_audit(g: MetricGraph, D, hatD, seg: Segment, q_cap: Fraction = DEFAULT_Q_CAP,
                     name: str = "bgi-27q2") -> AuditResult:
    fit = qg_fit(hatD, seg)
    C = math.ceil(27 * fit.Q * fit.Q)
    consts = {"Q": str(fit.Q), "C": C, "q_cap": str(q_cap)}
    if fit.Q > q_cap:
        consts["reason"] = "fitted Q above the cap; the hat image is not a uniform quasi-geodesic"
        return AuditResult(name, "not-applicable", consts)
    D = D if isinstance(D, DistanceMatrix) else DistanceMatrix(D)
    ok = has_bgi(g, D, seg, C)
    return AuditResult(name, "pass" if ok else "fail", consts,
                       [] if ok else [{"segment": list(seg.vertices), "C": C}])


def require_gauge(K: ContractionGauge, slope: int = 10, intercept: int = 1) -> None:
    if Fraction(K.slope) < slope or Fraction(K.intercept) < intercept:
        raise InputError(f"this audit needs K(r) ≥ {slope}r+{intercept}; got {K.spec()}")


def closest_point_audit(g: MetricGraph, D, hatD, seg: Segment, vertices: Iterable[int],
                        K: ContractionGauge = DEFAULT_GAUGE, bound: int = 17) -> list[dict]:
    """d̂(p, q) < 17 for the d-nearest p and d̂-nearest q on the segment."""
    require_gauge(K)
    d, h = _array(D), _array(hatD)
    idx = np.asarray(seg.vertices)
    out = []
    for x in vertices:
        p = int(idx[np.argmin(d[x, idx] * (len(idx) + 1) + _rank(idx))])
        q = int(idx[np.argmin(h[x, idx] * (len(idx) + 1) + _rank(idx))])
        if h[p, q] >= bound:
            out.append({"x": int(x), "p": p, "q": q, "hat_pq": int(h[p, q])})
    return out


def _rank(idx: np.ndarray) -> np.ndarray:
    """Tie-break weights preferring the lowest vertex id."""
    return np.argsort(np.argsort(idx))


def quadrangle_estimate_audit(g: MetricGraph, D, hatD, K: ContractionGauge, R: int,
                              pairs: int = 50, seed: int = 0, mode=Mode.THIN,
                              delta: Fraction | None = None, vertices=None) -> AuditResult:
    """Middle separators of long hat geodesics pin nearby geodesics.

    The universal constant is replaced by the measured four-point delta.
    """
    require_gauge(K)
    if not K.full():
        raise InputError("the quadrangle estimate needs a full gauge")
    D = D if isinstance(D, DistanceMatrix) else DistanceMatrix(D)
    d, h = D.array, _array(hatD)
    if delta is None:
        delta = four_point_delta(h, seed=seed).delta
    k = 2 * R + 3 * delta + 18
    kk = math.ceil(k)
    thresh = 2 * kk + 2
    consts = {"delta": str(delta), "k": str(k), "threshold": thresh, "R": R}
    pool = np.arange(d.shape[0]) if vertices is None else np.asarray(sorted(vertices))
    sub = h[np.ix_(pool, pool)]
    xs, ys = np.nonzero(np.triu(sub >= thresh, 1))
    if xs.size == 0:
        consts["reason"] = "no pair reaches the threshold at this scale"
        return AuditResult("quadrangle-estimate", "not-applicable", consts)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(xs.size, size=min(pairs, xs.size), replace=False)
    table = WitnessTable(g, D, K, mode)
    out = []
    checked = 0
    for i in sorted(chosen.tolist()):
        x, y = int(pool[xs[i]]), int(pool[ys[i]])
        path = some_geodesic(g, D, x, y).vertices
        xp = next(v for v in path if h[x, v] >= kk)
        yp = next(v for v in reversed(path) if h[v, y] >= kk)
        r0 = table.separation_radius(xp, yp)
        if r0 is None:
            out.append({"x": x, "y": y, "reason": "no middle separator"})
            continue
        near_x = np.flatnonzero(h[x] < R)
        near_y = np.flatnonzero(h[y] < R)
        line = np.asarray(path)
        for x2 in near_x.tolist():
            for y2 in near_y.tolist():
                other = np.asarray(some_geodesic(g, D, x2, y2).vertices)
                gap = int(d[np.ix_(line, other)].min())
                checked += 1
                if Fraction(gap) > r0.value:
                    out.append({"x": x, "y": y, "x2": x2, "y2": y2, "gap": gap, "r0": str(r0)})
    consts["pairs"] = int(len(chosen))
    consts["checked"] = checked
    return AuditResult("quadrangle-estimate", "fail" if out else "pass", consts, out)


def fit_qi(d1: np.ndarray, d2: np.ndarray, two_sided: bool = True) -> Fraction:
    """Least L on the 1/4 grid with d1/L − L ≤ d2 (and d2 ≤ L·d1 + L if two-sided)."""
    iu = np.triu_indices(d1.shape[0], 1)
    a, b = d1[iu], d2[iu]
    k = _min_k_lower(a, b)
    if two_sided:
        k = max(k, _min_k_upper(a, b))
    return Fraction(k, 4)


@dataclass(frozen=True)
class QIFit:
    L: Fraction
    size: int


def qi_embedding_audit(D, hatD, Y: Iterable[int]) -> QIFit:
    """Least L with d/L − L ≤ d̂ ≤ d on Y × Y."""
    Y = np.asarray(sorted(set(Y)))
    if Y.size == 0:
        raise InputError("Y must be nonempty")
    d, h = _array(D)[np.ix_(Y, Y)], _array(hatD)[np.ix_(Y, Y)]
    return QIFit(fit_qi(d, h, two_sided=False), int(Y.size))


def geodesic_image_audit(g: MetricGraph, D, hat: HatGraph, hatD, pairs) -> dict:
    """Hat diameter of base geodesics against d̂(x, y) + 2·(measured Hausdorff constant).

    The constant is the largest d̂-Hausdorff distance between a base geodesic
    and a hat geodesic with the same endpoints over the sampled pairs.
    """
    D = D if isinstance(D, DistanceMatrix) else DistanceMatrix(D)
    h = _array(hatD)
    hg = hat.graph()
    HD = DistanceMatrix(h)
    base_paths, hat_paths, haus = [], [], 0
    for x, y in pairs:
        bp = np.asarray(some_geodesic(g, D, x, y).vertices)
        hp = np.asarray(some_geodesic(hg, HD, x, y).vertices)
        sub = h[np.ix_(bp, hp)]
        haus = max(haus, int(sub.min(axis=1).max()), int(sub.min(axis=0).max()))
        base_paths.append((x, y, bp))
    out = []
    for x, y, bp in base_paths:
        diam = int(h[np.ix_(bp, bp)].max())
        if diam > h[x, y] + 2 * haus:
            out.append({"x": x, "y": y, "diameter": diam, "hat_xy": int(h[x, y])})
    return {"delta_meas": haus, "violations": out}


def diameter_scan(family: str, sizes: Sequence, K: ContractionGauge = DEFAULT_GAUGE,
                  mode=Mode.THIN, workers: int = 1, cap: int | None = None) -> list[tuple[str, int]]:
    """Hat vertex diameter for each size of a built-in family."""
    from .spaces import DEFAULT_GENERATION_CAP, make_family
    rows = []
    for size in sizes:
        inst = make_family(family, size, cap=cap or DEFAULT_GENERATION_CAP)
        hat = build_hat(inst.graph, None, K, mode, workers)
        rows.append((str(size), hat_diameter(hat)))
    return rows
