"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""

import itertools
import time

import numpy as np
import pytest

from corpus import cycle_edges, grid_edges, oracle_corpus
from oracles import Oracle
from xhat import hat as hat_module
from xhat.cli import run_audits
from xhat.contraction import (has_bgi, is_quadrangle_contracting, is_thin, make_query,
                              projection_halfdist_audit)
from xhat.graph import HalfInt, MetricGraph, Segment, all_pairs_distances, some_geodesic
from xhat.hat import (ContractionGauge, Mode, build_hat, hat_diameter, hat_distances, hat_rows,
                      is_separated)
from xhat.hyperbolic import (bgi_from_Q_audit, closest_point_audit, qg_fit, seeded_triples,
                             triangle_one_thin_audit)
from xhat.report import RunConfig
from xhat.spaces import (core, cone_vs_hat_audit, make_free_group_ball,
                         make_free_product_ball, make_free_product_corridor, make_grid,
                         make_random_tree, make_special_geodesic, parse_word,
                         tree_distance_table, word_text)

DEFAULT = ContractionGauge()
LINES: list[str] = []


def record(number, title, ok, detail, start, limit):
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < limit
    line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} "
            f"({elapsed:.1f} s, limit {limit} s)")
    LINES.append(line)
    print(line)
    return ok


def test_01_tree_identity():
    start = time.perf_counter()
    cones = 0
    sizes = []
    for seed in range(25):
        n = 20 + (seed * 47) % 281
        inst = make_random_tree(n, seed)
        sizes.append(n)
        cones += len(build_hat(inst.graph, None, DEFAULT).cone_edges)
    for radius in range(1, 6):
        cones += len(build_hat(make_free_group_ball(2, radius).graph, None, DEFAULT).cone_edges)
    ok = record(1, "tree identity", cones == 0,
                f"{cones} cone edges over 25 trees ({min(sizes)}-{max(sizes)} vertices) "
                f"and free-group balls of radius 1-5", start, 60)
    assert ok


def test_02_oracle_equivalence():
    start = time.perf_counter()
    mismatches = []
    checks = 0
    corpus = oracle_corpus(extras=False)
    for name, n, E in corpus:
        O = Oracle(n, E)
        g = MetricGraph.from_edges(n, E)
        D = all_pairs_distances(g)
        diam = int(D.diameter())
        for seg in O.all_segments():
            s = Segment(seg)
            for r2 in range(diam + 2):
                q = make_query(D, seg[0], seg[-1], s.midpoint, HalfInt(r2))
                checks += 1
                if is_thin(g, D, q) != O.is_thin(seg, r2):
                    mismatches.append((name, seg, "thin", r2))
            for C in range(len(seg) + 1):
                checks += 1
                if has_bgi(g, D, s, C) != O.has_bgi(seg, C):
                    mismatches.append((name, seg, "bgi", C))
    ok = record(2, "oracle equivalence", not mismatches,
                f"{checks} thin/BGI decisions on {len(corpus)} graphs, "
                f"{len(mismatches)} mismatches", start, 300)
    assert ok, mismatches[:5]


def test_03_grid_collapse():
    start = time.perf_counter()
    n, E = grid_edges(4, 4)
    O = Oracle(n, E)
    cones = [(x, y) for x, y in itertools.combinations(range(n), 2)
             if not O.separated(x, y, lambda r2: DEFAULT(HalfInt(r2)))]
    oracle_diam = int(all_pairs_distances(MetricGraph.from_edges(n, set(E) | set(cones))).diameter())
    diams = {N: hat_diameter(build_hat(make_grid(N).graph)) for N in (4, 6, 10, 14)}
    ok = oracle_diam <= 2 and all(d == oracle_diam for d in diams.values())
    ok = record(3, "grid collapse", ok,
                f"4x4 oracle diameter {oracle_diam}; hat diameters {diams}", start, 600)
    assert ok


def test_04_unbounded_branch():
    start = time.perf_counter()
    free = {R: hat_diameter(build_hat(make_free_group_ball(2, R).graph)) for R in range(3, 7)}
    zfp = {R: hat_diameter(build_hat(make_free_product_ball(R).graph)) for R in range(3, 7)}
    vals = [zfp[R] for R in range(3, 7)]
    ok = all(free[R] == 2 * R for R in free) and all(a < b for a, b in zip(vals, vals[1:]))
    ok = record(4, "unbounded branch", ok,
                f"free-group diameters {free}; free-product diameters {zfp}", start, 600)
    assert ok


def test_05_free_product_structure():
    start = time.perf_counter()
    res = cone_vs_hat_audit(make_free_product_ball(5), DEFAULT)
    a = not res["intra_sheet_missing"]
    b = not res["far_not_separated_at_0"]
    c = res["L_hat_tree"] <= 3
    ok = record(5, "free-product structure", a and b and c,
                f"core of {res['core_size']} vertices; (a) {res['intra_sheet_pairs']} intra-sheet "
                f"pairs, {len(res['intra_sheet_missing'])} missing; (b) {res['far_pairs']} pairs at "
                f"tree distance >= 2, {len(res['far_not_separated_at_0'])} not separated at r=0; "
                f"(c) hat-to-tree QI constant {res['L_hat_tree']} (bound 3)", start, 900)
    assert ok


def _segment_quad_diameter(g, D, seg, K):
    """1 if every non-adjacent segment pair is anti-contracting, else a witness pair."""
    for x, y in itertools.combinations(seg.vertices, 2):
        if D[x, y] > 1:
            w = is_separated(g, D, x, y, K, Mode.QUAD)
            if w is not None:
                return 2, (x, y, w)
    return 1, None


def test_06_alternative_space_divergence():
    start = time.perf_counter()
    inst = make_free_product_corridor(32)
    g = inst.graph
    D = all_pairs_distances(g)
    seg = make_special_geodesic(inst, 32)
    assert inst.words[seg.last] == parse_word("b^5 a b^25 a")
    a_count = sum(1 for syl in inst.words[seg.last] if syl[0] == "a")
    tree_gap = int(tree_distance_table(inst, [seg.first, seg.last])[0, 1])

    quad_diam, witness = _segment_quad_diameter(g, D, seg, DEFAULT)
    thin = build_hat(g, D, DEFAULT, Mode.THIN)
    idx = list(seg.vertices)
    thin_diam = int(hat_rows(thin, idx)[:, idx].max())
    alt_diam, _ = _segment_quad_diameter(g, D, seg, ContractionGauge(10, 2))

    def shown(d):
        return "1" if d == 1 else ">= 2"

    word = lambda v: word_text(inst.words[v])  # noqa: E731
    detail = (f"segment b^5 a b^25 a (length {seg.length}) in a {inst.n}-vertex corridor; "
              f"QUAD diameter {shown(quad_diam)}"
              + ("" if witness is None else
                 f" (pair {word(witness[0])} / {word(witness[1])} separated by the subsegment "
                 f"{word(witness[2].p)} -> {word(witness[2].q)} at r={witness[2].radius})")
              + f"; endpoint tree distance {tree_gap}; THIN diameter {thin_diam} vs {a_count} a-letters"
              f"; with gauge 10r+2 the QUAD diameter is {shown(alt_diam)}")
    ok = record(6, "alternative-space divergence",
                quad_diam == 1 and tree_gap >= 2 and thin_diam >= a_count, detail, start, 1200)
    assert tree_gap >= 2 and thin_diam >= a_count
    assert ok, "the segment's a-edges are 0-thin 0-quadrangle-contracting witnesses at K(0) = 1"


def test_07_closest_point():
    start = time.perf_counter()
    inst = make_free_product_ball(5)
    D = all_pairs_distances(inst.graph)
    hatD = hat_distances(build_hat(inst.graph, D))
    Y = core(inst, 2)[1]
    v1 = closest_point_audit(inst.graph, D, hatD, inst.segment("a-axis"), Y, DEFAULT)
    grid = make_grid(8)
    Dg = all_pairs_distances(grid.graph)
    hg = hat_distances(build_hat(grid.graph, Dg))
    v2 = closest_point_audit(grid.graph, Dg, hg, grid.segment("row"), range(grid.n), DEFAULT)
    ok = record(7, "closest-point 17-bound", not v1 and not v2,
                f"{len(Y)} core vertices vs the a-axis: {len(v1)} violations; "
                f"64 grid vertices vs a row: {len(v2)} violations", start, 300)
    assert ok


def test_08_one_thin_triangles():
    start = time.perf_counter()
    counts = {}
    for label, inst in (("8x8 grid", make_grid(8)), ("radius-5 free product", make_free_product_ball(5))):
        D = all_pairs_distances(inst.graph)
        hatD = hat_distances(build_hat(inst.graph, D))
        triples = seeded_triples(range(inst.n), 500, seed=0)
        counts[label] = len(triangle_one_thin_audit(inst.graph, D, hatD, triples))
    ok = record(8, "1-thin triangles", not any(counts.values()),
                f"violations over 500 triangles each: {counts}", start, 300)
    assert ok


def test_09_bgi_from_quasi_geodesic_constant():
    start = time.perf_counter()
    Qs, statuses = {}, {}
    for R in (4, 5, 6):
        inst = make_free_product_ball(R)
        hat = build_hat(inst.graph)
        axis = inst.segment("a-axis")
        idx = list(axis.vertices)
        sub = hat_rows(hat, idx)[:, idx]
        Qs[R] = qg_fit(sub, Segment(tuple(range(len(idx))))).Q
        C = -(-27 * Qs[R] * Qs[R] // 1)
        if R <= 5:
            D = all_pairs_distances(inst.graph)
            res = bgi_from_Q_audit(inst.graph, D, hat_distances(hat), axis)
            statuses[R] = res.status
        else:
            # ⌈27Q²⌉ exceeds the axis length, so the check needs no distance table
            statuses[R] = "pass" if has_bgi(inst.graph, None, axis, int(C)) else "fail"
    qs = [Qs[R] for R in (4, 5, 6)]
    ok = all(a >= b for a, b in zip(qs, qs[1:])) and all(s == "pass" for s in statuses.values())
    ok = record(9, "27Q^2 audit", ok,
                f"Q by radius {{{', '.join(f'{R}: {Q}' for R, Q in Qs.items())}}}; "
                f"BGI status {statuses}", start, 600)
    assert ok


def test_10_projection_halfdist():
    start = time.perf_counter()
    grid = make_grid(6)
    Dg = all_pairs_distances(grid.graph)
    segs = [grid.segment("row"), Segment(tuple(range(6))),
            some_geodesic(grid.graph, Dg, 0, 35), some_geodesic(grid.graph, Dg, 7, 28)]
    v_grid = sum(len(projection_halfdist_audit(grid.graph, Dg, s)) for s in segs)
    inst = make_free_product_ball(4)
    D = all_pairs_distances(inst.graph)
    v_zfp = len(projection_halfdist_audit(inst.graph, D, inst.segment("a-axis")))
    ok = record(10, "projection half-distance", v_grid == 0 and v_zfp == 0,
                f"{len(segs)} grid segments: {v_grid} violations; radius-4 a-axis: {v_zfp} violations",
                start, 300)
    assert ok


def _grid_maps(w, h):
    maps = []
    for fi, fj in itertools.product((False, True), repeat=2):
        maps.append(lambda v, fi=fi, fj=fj: (
            (w - 1 - v // h if fi else v // h) * h + (h - 1 - v % h if fj else v % h)))
    if w == h:
        maps += [lambda v, m=m: (m(v) % h) * h + m(v) // h for m in list(maps)]
    return maps


def _cycle_maps(n):
    return [lambda v, k=k, s=s: (s * v + k) % n for k in range(n) for s in (1, -1)]


def test_11_structural_invariants():
    start = time.perf_counter()
    failures = []
    spaces = [(f"grid{w}x{h}", MetricGraph.from_edges(*grid_edges(w, h)), _grid_maps(w, h))
              for w, h in ((4, 4), (5, 5), (4, 6))]
    spaces += [(f"C{n}", MetricGraph.from_edges(*cycle_edges(n)), _cycle_maps(n))
               for n in (6, 8, 9, 12)]
    spaces += [("zfp3", make_free_product_ball(3).graph, [])]
    gauges = [ContractionGauge(4, 1), DEFAULT, ContractionGauge(10, 3),
              ContractionGauge(4, 1, HalfInt(2))]
    for name, g, maps in spaces:
        D = all_pairs_distances(g)
        cones = {}
        for K in gauges:
            for mode in Mode:
                hat = build_hat(g, D, K, mode)
                cones[K, mode] = set(hat.cone_edges)
                if (hat_distances(hat).array > D.array).any():
                    failures.append((name, "hat above base", K.spec(), mode.value))
                for f in maps:
                    if {tuple(sorted((f(u), f(v)))) for u, v in cones[K, mode]} != cones[K, mode]:
                        failures.append((name, "equivariance", K.spec(), mode.value))
                        break
            if not cones[K, Mode.THIN] <= cones[K, Mode.QUAD]:
                failures.append((name, "A in B", K.spec()))
        for mode in Mode:
            if not cones[gauges[0], mode] <= cones[gauges[1], mode] <= cones[gauges[2], mode]:
                failures.append((name, "gauge monotonicity", mode.value))
        # thinness monotone in r, and quadrangle-contracting implies (4r+1)-BGI
        pairs = list(itertools.combinations(range(g.vertex_count), 2))[::7]
        for x, y in pairs:
            seg = some_geodesic(g, D, x, y)
            thin = [is_thin(g, D, make_query(D, x, y, seg.midpoint, HalfInt(r2))) for r2 in range(8)]
            if any(a and not b for a, b in zip(thin, thin[1:])):
                failures.append((name, "thin monotone", seg.vertices))
            for r2 in range(6):
                if is_quadrangle_contracting(g, D, seg, HalfInt(r2)):
                    if not has_bgi(g, D, seg, 2 * r2 + 1):
                        failures.append((name, "QC implies BGI", seg.vertices, r2))
    ok = record(11, "structural invariants", not failures,
                f"{len(spaces)} spaces x {len(gauges)} gauges x 2 modes: {len(failures)} failures",
                start, 600)
    assert ok, failures[:5]


def test_12_determinism(tmp_path):
    start = time.perf_counter()
    audits = ["one-thin-triangles", "closest-point-17", "projection-halfdist", "bgi-27q2",
              "equivalence", "quadrangle-estimate", "four-point", "qi-embedding",
              "geodesic-image", "hat-le-base", "convex-core", "cone-vs-hat"]
    texts = {}
    for workers in (1, 4, 16):
        hat_module._PIECE_RESULTS.clear()
        cfg = RunConfig(space="zfp:4", seed=7, workers=workers, out=tmp_path)
        texts[workers] = run_audits(cfg, audits).to_json()
    same = texts[1] == texts[4] == texts[16]
    ok = record(12, "determinism", same,
                f"{len(audits)} audits on zfp:4, JSON reports for 1/4/16 workers "
                f"{'byte-identical' if same else 'differ'}", start, 300)
    assert ok
