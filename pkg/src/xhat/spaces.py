"""Built-in example spaces and their extra structure.

Besides paths, cycles, grids and trees, the main family is the Cayley graph
of Z * Z^2 with generators a (for Z) and b, c (for Z^2).  Group elements are
kept in normal form: a tuple of alternating syllables ``("a", k)`` and
``("z", m, n)`` meaning a^k and b^m c^n.  Word length is the sum of |k| and
|m| + |n| over syllables, and it equals the graph distance to the identity.
The cosets of <b, c> are the sheets; collapsing each sheet to a point gives
the Bass-Serre tree.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import InputError, InvariantError
from .graph import (DistanceMatrix, MetricGraph, Segment, all_pairs_distances, bfs_rows,
                    format_graph, parse_graph_lines, validate_convex_embedding)

DEFAULT_GENERATION_CAP = 20_000
DEFAULT_SWEEP_CAP = 3_000

Syllable = tuple
Word = tuple


@dataclass(frozen=True)
class PeripheralSystem:
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subs = []
        for s in self.subsets:
            t = tuple(sorted(set(int(v) for v in s)))
            if len(t) < 2:
                raise InputError("peripheral subsets need at least two vertices")
            subs.append(t)
        object.__setattr__(self, "subsets", tuple(subs))

    def validate(self, n: int) -> None:
        for s in self.subsets:
            if s[0] < 0 or s[-1] >= n:
                raise InputError(f"peripheral {s} leaves the vertex range 0..{n - 1}")


@dataclass(frozen=True)
class SpaceInstance:
    """A graph with its family tag and optional sheet/segment structure."""

    graph: MetricGraph
    family: str
    param: str
    sheets: tuple[int, ...] | None = None
    segments: tuple[tuple[str, tuple[int, ...]], ...] = ()
    peripherals: PeripheralSystem | None = None
    words: tuple[Word, ...] | None = field(default=None, compare=False)

    def segment(self, name: str) -> Segment:
        for key, verts in self.segments:
            if key == name:
                return Segment(verts)
        raise InputError(f"instance has no segment named {name!r}")

    @property
    def n(self) -> int:
        return self.graph.vertex_count

    def index_of(self, word: Word) -> int:
        index = self.__dict__.get("_word_index")
        if index is None:
            if self.words is None:
                raise InputError("instance has no normal-form words")
            index = {w: i for i, w in enumerate(self.words)}
            self.__dict__["_word_index"] = index
        try:
            return index[word]
        except KeyError:
            raise InputError(f"word {word_text(word)} is not in the instance") from None


def _check_size(n: int, cap: int):
    if n < 2:
        raise InputError("size must be at least 2")
    if n > cap:
        raise InputError(f"instance would have {n} vertices, above the cap {cap}")


def make_path(n: int, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    _check_size(n, cap)
    g = MetricGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)], [str(i) for i in range(n)])
    return SpaceInstance(g, "path", str(n), segments=(("main", tuple(range(n))),))


def make_cycle(n: int, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    _check_size(n, cap)
    if n < 3:
        raise InputError("a cycle needs at least 3 vertices")
    g = MetricGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], [str(i) for i in range(n)])
    return SpaceInstance(g, "cycle", str(n))


def grid_index(i: int, j: int, h: int) -> int:
    return i * h + j


def make_grid(w: int, h: int | None = None, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """w×h grid; vertex (i, j) has id i*h + j and label '(i,j)'."""
    h = w if h is None else h
    if w < 2 or h < 2:
        raise InputError("grid sides must be at least 2")
    _check_size(w * h, cap)
    edges = []
    for i in range(w):
        for j in range(h):
            if i + 1 < w:
                edges.append((grid_index(i, j, h), grid_index(i + 1, j, h)))
            if j + 1 < h:
                edges.append((grid_index(i, j, h), grid_index(i, j + 1, h)))
    labels = [f"({i},{j})" for i in range(w) for j in range(h)]
    g = MetricGraph.from_edges(w * h, edges, labels)
    row = tuple(grid_index(i, 0, h) for i in range(w))
    return SpaceInstance(g, "grid", f"{w}x{h}", segments=(("row", row),))


def make_random_tree(n: int, seed: int = 0, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """Uniform labelled tree on n vertices from a seeded Prüfer sequence."""
    _check_size(n, cap)
    rng = np.random.default_rng(seed)
    if n == 2:
        edges = [(0, 1)]
    else:
        seq = rng.integers(0, n, size=n - 2).tolist()
        edges = sorted(nx.from_prufer_sequence(seq).edges())
    g = MetricGraph.from_edges(n, edges, [str(i) for i in range(n)])
    return SpaceInstance(g, "tree", f"{n}:{seed}")


def make_free_group_ball(rank: int, radius: int, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """Ball of the 2k-regular tree (Cayley graph of the free group of rank k)."""
    if rank < 2 or radius < 1:
        raise InputError("free-group ball needs rank >= 2 and radius >= 1")
    size = 1 + 2 * rank * sum((2 * rank - 1) ** i for i in range(radius))
    _check_size(size, cap)
    letters = [chr(ord("a") + i) for i in range(rank)]
    gens = [(x, 1) for x in letters] + [(x, -1) for x in letters]
    words: list[tuple] = [()]
    edges = []
    frontier = [0]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            w = words[v]
            for gen in gens:
                if w and w[-1] == (gen[0], -gen[1]):
                    continue
                words.append(w + (gen,))
                edges.append((v, len(words) - 1))
                nxt.append(len(words) - 1)
        frontier = nxt
    labels = ["".join(x if e == 1 else x.upper() for x, e in w) or "e" for w in words]
    g = MetricGraph.from_edges(len(words), edges, labels)
    return SpaceInstance(g, "fgroup", f"{rank}:{radius}")


# ---------------------------------------------------------------------------
# Z * Z^2


GENERATORS: tuple[tuple[str, Syllable], ...] = (
    ("a", ("a", 1)), ("a", ("a", -1)),
    ("b", ("z", 1, 0)), ("b", ("z", -1, 0)),
    ("c", ("z", 0, 1)), ("c", ("z", 0, -1)),
)


def multiply(word: Word, syl: Syllable) -> Word:
    """Right-multiply a normal form by one syllable and renormalize."""
    if word and word[-1][0] == syl[0]:
        last = word[-1]
        if syl[0] == "a":
            k = last[1] + syl[1]
            merged = ("a", k) if k else None
        else:
            m, n = last[1] + syl[1], last[2] + syl[2]
            merged = ("z", m, n) if (m or n) else None
        return word[:-1] + ((merged,) if merged else ())
    return word + (syl,)


def word_length(word: Word) -> int:
    return sum(abs(s[1]) if s[0] == "a" else abs(s[1]) + abs(s[2]) for s in word)


def sheet_prefix(word: Word) -> Word:
    """Representative of the <b, c>-coset: the word without a trailing b/c syllable."""
    return word[:-1] if word and word[-1][0] == "z" else word


def _power(letter: str, k: int) -> str:
    return letter if k == 1 else f"{letter}^{k}"


def word_text(word: Word) -> str:
    parts = []
    for s in word:
        if s[0] == "a":
            parts.append(_power("a", s[1]))
        else:
            if s[1]:
                parts.append(_power("b", s[1]))
            if s[2]:
                parts.append(_power("c", s[2]))
    return " ".join(parts) or "e"


_TOKEN = re.compile(r"^([abc])(?:\^(-?\d+))?$")


def parse_word(text: str) -> Word:
    """Inverse of :func:`word_text`; also accepts any product of a/b/c powers."""
    word: Word = ()
    if text.strip() == "e":
        return word
    for tok in text.split():
        m = _TOKEN.match(tok)
        if not m:
            raise InputError(f"bad word token {tok!r}")
        k = int(m.group(2) or 1)
        letter = m.group(1)
        step = {"a": ("a", 1), "b": ("z", 1, 0), "c": ("z", 0, 1)}[letter]
        inv = {"a": ("a", -1), "b": ("z", -1, 0), "c": ("z", 0, -1)}[letter]
        for _ in range(abs(k)):
            word = multiply(word, step if k > 0 else inv)
    return word


def _word_sort_key(word: Word):
    return (word_length(word), word)


def _instance_from_words(words: Sequence[Word], family: str, param: str,
                         segments: dict[str, Sequence[Word]], extra_edges=()) -> SpaceInstance:
    words = sorted(set(words), key=_word_sort_key)
    index = {w: i for i, w in enumerate(words)}
    edges = set()
    for w, i in index.items():
        for _, syl in GENERATORS:
            j = index.get(multiply(w, syl))
            if j is not None:
                edges.add((min(i, j), max(i, j)))
    g = MetricGraph.from_edges(len(words), sorted(edges), [word_text(w) for w in words])
    prefixes = sorted({sheet_prefix(w) for w in words}, key=_word_sort_key)
    sheet_id = {p: k for k, p in enumerate(prefixes)}
    sheets = tuple(sheet_id[sheet_prefix(w)] for w in words)
    segs = tuple((name, tuple(index[w] for w in seq)) for name, seq in segments.items())
    inst = SpaceInstance(g, family, param, sheets, segs, None, tuple(words))
    _check_sheet_invariants(inst)
    return inst


def edge_letter(inst: SpaceInstance, u: int, v: int) -> str:
    """Generator labelling the edge u–v of a Z * Z^2 instance."""
    wu, wv = inst.words[u], inst.words[v]
    for letter, syl in GENERATORS:
        if multiply(wu, syl) == wv:
            return letter
    raise InputError(f"({u}, {v}) is not a Cayley edge")


def _check_sheet_invariants(inst: SpaceInstance) -> None:
    for u, v in inst.graph.edges:
        crosses = inst.sheets[u] != inst.sheets[v]
        if crosses != (edge_letter(inst, u, v) == "a"):
            raise InvariantError(f"edge ({u}, {v}) breaks the sheet structure")
    bass_serre_projection(inst)


def make_free_product_ball(radius: int, cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """Ball of radius R around the identity in the Cayley graph of Z * Z^2."""
    if radius < 1:
        raise InputError("radius must be at least 1")
    seen = {(): 0}
    queue = deque([()])
    while queue:
        w = queue.popleft()
        if seen[w] == radius:
            continue
        for _, syl in GENERATORS:
            v = multiply(w, syl)
            if v not in seen:
                seen[v] = seen[w] + 1
                if len(seen) > cap:
                    raise InputError(f"radius-{radius} ball exceeds the vertex cap {cap}")
                queue.append(v)
    axis = [(("a", k),) if k else () for k in range(-radius, radius + 1)]
    return _instance_from_words(seen, "zfp", str(radius), {"a-axis": axis})


def special_word(budget: int) -> Word:
    """Prefix of b^5 a b^25 a b^125 a ... with ``budget`` letters, as a normal form."""
    letters = []
    i = 1
    while len(letters) < budget:
        letters += ["b"] * 5 ** i + ["a"]
        i += 1
    word: Word = ()
    for x in letters[:budget]:
        word = multiply(word, ("a", 1) if x == "a" else ("z", 1, 0))
    return word


def special_prefixes(budget: int) -> list[Word]:
    letters = []
    i = 1
    while len(letters) < budget:
        letters += ["b"] * 5 ** i + ["a"]
        i += 1
    out: list[Word] = [()]
    for x in letters[:budget]:
        out.append(multiply(out[-1], ("a", 1) if x == "a" else ("z", 1, 0)))
    return out


def make_free_product_corridor(budget: int, margin: int = 5,
                               cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """Convex piece of the Z * Z^2 Cayley graph around the special geodesic.

    One box of each sheet the geodesic visits (its b-range padded by
    ``margin`` on every side), joined by the a-edges of the geodesic.  Boxes
    are convex in their sheets and sheets meet only through a-edges, so the
    piece embeds isometrically in the whole Cayley graph.  It stands in for
    balls of radius ≥ 32, which are far too large to build.
    """
    if budget < 1 or margin < 0:
        raise InputError("corridor needs budget >= 1 and margin >= 0")
    path = special_prefixes(budget)
    spans: dict[Word, list[int]] = {}
    for w in path:
        pre = sheet_prefix(w)
        m = w[-1][1] if w and w[-1][0] == "z" else 0
        lo_hi = spans.setdefault(pre, [m, m])
        lo_hi[0], lo_hi[1] = min(lo_hi[0], m), max(lo_hi[1], m)
    words = set()
    for pre, (lo, hi) in spans.items():
        for m in range(lo - margin, hi + margin + 1):
            for n in range(-margin, margin + 1):
                words.add(pre + ((("z", m, n),) if (m or n) else ()))
    if len(words) > cap:
        raise InputError(f"corridor would have {len(words)} vertices, above the cap {cap}")
    inst = _instance_from_words(words, "zfp-corridor", f"{budget}:{margin}", {"special": path})
    return inst


def make_special_geodesic(inst: SpaceInstance, budget: int) -> Segment:
    """The special geodesic b^5 a b^25 a ... truncated to ``budget`` letters."""
    if inst.sheets is None or inst.words is None:
        raise InputError("instance has no sheet structure")
    if budget < 1:
        raise InputError("budget must be positive")
    prefixes = special_prefixes(budget)
    if inst.family == "zfp" and budget > int(inst.param):
        raise InputError(f"budget {budget} exceeds the ball radius {inst.param}")
    verts = tuple(inst.index_of(w) for w in prefixes)
    seg = Segment(verts)
    if word_length(prefixes[-1]) != budget:
        raise InvariantError("special word is not reduced")
    for u, v in zip(verts, verts[1:]):
        if not inst.graph.has_edge(u, v):
            raise InvariantError("special word is not a path in the instance")
    return seg


def bass_serre_projection(inst: SpaceInstance) -> tuple[MetricGraph, tuple[int, ...]]:
    """Quotient of the instance by its sheets, verified to be a tree."""
    if inst.sheets is None:
        raise InputError("instance has no sheet structure")
    k = max(inst.sheets) + 1
    tedges = set()
    for u, v in inst.graph.edges:
        su, sv = inst.sheets[u], inst.sheets[v]
        if su != sv:
            key = (min(su, sv), max(su, sv))
            if key in tedges:
                raise InvariantError("two a-edges join the same pair of sheets")
            tedges.add(key)
    if len(tedges) != k - 1:
        raise InvariantError("sheet quotient is not a tree")
    tree = MetricGraph.from_edges(k, sorted(tedges))
    return tree, inst.sheets


def tree_distance_table(inst: SpaceInstance, vertices: Sequence[int]) -> np.ndarray:
    """d_T(π(u), π(v)) for u, v in ``vertices``."""
    tree, proj = bass_serre_projection(inst)
    sheets = np.asarray([proj[v] for v in vertices])
    rows = bfs_rows(tree, sorted(set(sheets.tolist())))
    pos = {s: i for i, s in enumerate(sorted(set(sheets.tolist())))}
    return rows[[pos[s] for s in sheets]][:, sheets]


def sheet_peripherals(inst: SpaceInstance) -> PeripheralSystem:
    groups: dict[int, list[int]] = {}
    for v, s in enumerate(inst.sheets):
        groups.setdefault(s, []).append(v)
    return PeripheralSystem(tuple(tuple(vs) for _, vs in sorted(groups.items()) if len(vs) >= 2))


def cone_off(g: MetricGraph, peripherals: PeripheralSystem | Iterable[Iterable[int]]) -> MetricGraph:
    """Add a unit-edge clique on every peripheral subset."""
    if not isinstance(peripherals, PeripheralSystem):
        peripherals = PeripheralSystem(tuple(tuple(p) for p in peripherals))
    peripherals.validate(g.vertex_count)
    edges = set(g.edges)
    for subset in peripherals.subsets:
        for i, u in enumerate(subset):
            for v in subset[i + 1:]:
                edges.add((u, v))
    return MetricGraph.from_edges(g.vertex_count, sorted(edges), g.labels)


def core(inst: SpaceInstance, depth: int = 2) -> tuple[SpaceInstance, list[int]]:
    """The radius-(R - depth) ball of a Z * Z^2 ball, as an instance plus vertex map."""
    if inst.family != "zfp":
        raise InputError("cores are defined for free-product balls")
    radius = int(inst.param) - depth
    if radius < 1:
        raise InputError("ball too small for the requested core")
    small = make_free_product_ball(radius)
    return small, [inst.index_of(w) for w in small.words]


def validate_core(inst: SpaceInstance, depth: int = 2) -> list[tuple]:
    small, vmap = core(inst, depth)
    return validate_convex_embedding(small.graph, inst.graph, vmap)


# ---------------------------------------------------------------------------
# File format


def format_space(inst: SpaceInstance) -> str:
    body = format_graph(inst.graph, f"space v1 {inst.family} {inst.param}")
    extra = []
    if inst.sheets is not None:
        extra += [f"s {v} {s}" for v, s in enumerate(inst.sheets)]
    extra += [f"seg {name} " + " ".join(map(str, verts)) for name, verts in inst.segments]
    if inst.peripherals is not None:
        extra += ["per " + " ".join(map(str, s)) for s in inst.peripherals.subsets]
    return body + "".join(line + "\n" for line in extra)


def parse_space(text: str) -> SpaceInstance:
    lines = text.splitlines()
    if not lines:
        raise InputError("line 1: empty space file")
    head = lines[0].split()
    if len(head) != 4 or head[:2] != ["space", "v1"]:
        raise InputError("line 1: expected header 'space v1 <family> <param>'")
    family, param = head[2], head[3]
    sheets: dict[int, int] = {}
    segments: list[tuple[str, tuple[int, ...]]] = []
    peripherals: list[tuple[int, ...]] = []
    top = -1

    def extra(kind, rest, lineno):
        nonlocal top
        parts = rest.split()
        if kind == "s":
            if len(parts) != 2:
                raise InputError("malformed 's' record")
            v, s = int(parts[0]), int(parts[1])
            sheets[v] = s
            top = max(top, v)
        elif kind == "seg":
            if len(parts) < 2:
                raise InputError("segment needs a name and at least one vertex")
            segments.append((parts[0], tuple(int(x) for x in parts[1:])))
        elif kind == "per":
            peripherals.append(tuple(int(x) for x in parts))
        else:
            raise InputError(f"unknown record '{kind}'")

    # The vertex count is the largest index mentioned anywhere, plus one.
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "e":
                top = max(top, int(parts[1]), int(parts[2]))
            elif parts[0] in ("l", "s"):
                top = max(top, int(parts[1]))
        except (ValueError, IndexError):
            raise InputError(f"line {lineno}: malformed '{parts[0]}' record") from None
    n = top + 1
    if n < 1:
        raise InputError(f"line {len(lines)}: file ends before any vertex")
    g = parse_graph_lines(lines[1:], n, extra=extra)
    sheet_tuple = None
    if sheets:
        if sorted(sheets) != list(range(n)):
            raise InputError(f"line {len(lines)}: sheet records do not cover every vertex")
        sheet_tuple = tuple(sheets[v] for v in range(n))
    for name, verts in segments:
        if any(not 0 <= v < n for v in verts):
            raise InputError(f"segment {name} mentions a vertex outside 0..{n - 1}")
    per = PeripheralSystem(tuple(peripherals)) if peripherals else None
    if per is not None:
        per.validate(n)
    words = None
    if family in ("zfp", "zfp-corridor") and g.labels is not None:
        words = tuple(parse_word(label) for label in g.labels)
    return SpaceInstance(g, family, param, sheet_tuple, tuple(segments), per, words)


def load_space(path) -> SpaceInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_space(fh.read())


def save_space(inst: SpaceInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_space(inst))


def make_family(family: str, size: str | int, seed: int = 0,
                cap: int = DEFAULT_GENERATION_CAP) -> SpaceInstance:
    """Build an instance from a family name and a size string."""
    size = str(size)
    try:
        if family == "path":
            return make_path(int(size), cap)
        if family == "cycle":
            return make_cycle(int(size), cap)
        if family == "grid":
            w, _, h = size.partition("x")
            return make_grid(int(w), int(h) if h else None, cap)
        if family == "tree":
            n, _, s = size.partition(":")
            return make_random_tree(int(n), int(s) if s else seed, cap)
        if family == "fgroup":
            k, _, r = size.partition(":")
            return make_free_group_ball(int(k), int(r), cap) if r else make_free_group_ball(2, int(k), cap)
        if family == "zfp":
            return make_free_product_ball(int(size), cap)
        if family == "zfp-corridor":
            b, _, m = size.partition(":")
            return make_free_product_corridor(int(b), int(m) if m else 5, cap)
    except ValueError:
        raise InputError(f"bad size {size!r} for family {family!r}") from None
    raise InputError(f"unknown family {family!r}")


FAMILIES = ("path", "cycle", "grid", "tree", "fgroup", "zfp", "zfp-corridor")


def cone_vs_hat_audit(inst: SpaceInstance, K=None, mode="thin", core_depth: int = 2,
                      workers: int = 1) -> dict:
    """Compare the hat, the sheet-coned graph and the Bass-Serre tree on the core.

    Returns fitted QI constants between the three metrics plus the two sheet
    observations: intra-sheet pairs get cone edges, and pairs whose sheets
    are at tree distance ≥ K(0) + 1 are separated at radius 0.
    """
    from .graph import HalfInt
    from .hat import DEFAULT_GAUGE, WitnessTable, build_hat, hat_rows
    from .hyperbolic import fit_qi

    K = DEFAULT_GAUGE if K is None else K
    D = all_pairs_distances(inst.graph) if inst.n <= DEFAULT_SWEEP_CAP else None
    hat = build_hat(inst.graph, D, K, mode, workers)
    if inst.family == "zfp":
        _, Y = core(inst, core_depth)
        if validate_core(inst, core_depth):
            raise InvariantError("core does not embed isometrically")
    else:
        Y = list(range(inst.n))
    Y = sorted(Y)
    hatD = hat_rows(hat, Y)[:, Y]
    coned = cone_off(inst.graph, sheet_peripherals(inst))
    coneD = bfs_rows(coned, Y)[:, Y]
    treeD = tree_distance_table(inst, Y)
    cones = set(hat.cone_edges)
    sheets = np.asarray([inst.sheets[v] for v in Y])
    same = sheets[:, None] == sheets[None, :]
    missing = [(Y[i], Y[j]) for i, j in zip(*np.nonzero(np.triu(same, 1)))
               if (Y[i], Y[j]) not in cones]
    far_gap = K(HalfInt(0)) + 1
    far = np.triu(treeD >= far_gap, 1)
    not_separated = []
    if D is None:
        D = all_pairs_distances(inst.graph)
    table = WitnessTable(inst.graph, D, K, mode)
    for i, j in zip(*np.nonzero(far)):
        r = table.separation_radius(Y[i], Y[j])
        if r is None or r.doubled != 0:
            not_separated.append((Y[i], Y[j], None if r is None else str(r)))
    bound = K(HalfInt(0)) + 2
    L_hat_tree = fit_qi(hatD, treeD)
    return {
        "core_size": len(Y),
        "cone_edges": len(cones),
        "L_hat_tree": L_hat_tree,
        "L_hat_cone": fit_qi(hatD, coneD),
        "L_cone_tree": fit_qi(coneD, treeD),
        "qi_bound": bound,
        "intra_sheet_pairs": int(np.triu(same, 1).sum()),
        "intra_sheet_missing": missing,
        "far_pairs": int(far.sum()),
        "far_not_separated_at_0": not_separated,
        "passed": not missing and not not_separated and L_hat_tree <= bound,
    }
