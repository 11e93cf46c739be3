"""Command-line entry point: ``xhat <command> [options]``.

Exit codes: 0 success, 1 an audit failed, 2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .cache import cache_dir, cached_distances, graph_key, rmin_load, rmin_store
from .contraction import engine_for, equivalence_audit, projection_halfdist_audit
from .errors import InputError
from .graph import DistanceMatrix, Segment, some_geodesic
from .hat import ContractionGauge, HatGraph, Mode, build_hat, hat_diameter, hat_distances, write_hat
from .hyperbolic import (AuditResult, bgi_from_Q_audit, closest_point_audit, four_point_delta,
                         geodesic_image_audit, qi_embedding_audit, quadrangle_estimate_audit,
                         seeded_triples, triangle_one_thin_audit, diameter_scan)
from .report import AuditReport, ResultEntry, RunConfig
from .spaces import (FAMILIES, SpaceInstance, cone_vs_hat_audit, core, load_space, make_family,
                     save_space, validate_core)

log = logging.getLogger("xhat")


class Context:
    """Lazily computed tables shared by the audits of one run."""

    def __init__(self, cfg: RunConfig, inst: SpaceInstance):
        self.cfg = cfg
        self.inst = inst
        self.g = inst.graph
        self._D = self._hat = self._hatD = None

    def _check_cap(self):
        if self.g.vertex_count > self.cfg.cap_vertices:
            raise InputError(f"instance has {self.g.vertex_count} vertices, above "
                             f"--cap-vertices {self.cfg.cap_vertices}")

    @property
    def D(self) -> DistanceMatrix:
        if self._D is None:
            self._check_cap()
            self._D = cached_distances(self.g)
            key = graph_key(self.g)
            records = rmin_load(key, self.g.vertex_count)
            if records:
                engine_for(self.g).seed_rmin(records)
        return self._D

    @property
    def hat(self) -> HatGraph:
        if self._hat is None:
            self._hat = build_hat(self.g, self.D, self.cfg.gauge, self.cfg.mode, self.cfg.workers)
        return self._hat

    @property
    def hatD(self) -> np.ndarray:
        if self._hatD is None:
            self._hatD = hat_distances(self.hat).array
        return self._hatD

    @property
    def core_vertices(self) -> list[int]:
        if self.inst.family == "zfp" and int(self.inst.param) > 2:
            return sorted(core(self.inst, 2)[1])
        return list(range(self.g.vertex_count))

    @property
    def segment(self) -> Segment:
        if self.cfg.segment:
            return self.inst.segment(self.cfg.segment)
        if self.inst.segments:
            return Segment(self.inst.segments[0][1])
        far = int(np.argmax(self.D.array[0]))
        return some_geodesic(self.g, self.D, 0, far)

    def save_rmin(self):
        if cache_dir() is not None and self._D is not None:
            eng = engine_for(self.g)
            rmin_store(graph_key(self.g), eng.rmin_records(), self.g.vertex_count)


def _entry(name, status, constants=None, violations=None) -> ResultEntry:
    return ResultEntry(name, status, constants or {}, violations or [])


def _from_list(name, violations, constants=None) -> ResultEntry:
    return _entry(name, "fail" if violations else "pass", constants, violations)


def audit_triangles(ctx: Context) -> ResultEntry:
    triples = seeded_triples(ctx.core_vertices, ctx.cfg.samples, ctx.cfg.seed)
    v = triangle_one_thin_audit(ctx.g, ctx.D, ctx.hatD, triples)
    return _from_list("one-thin-triangles", v, {"triangles": len(triples)})


def audit_closest_point(ctx: Context) -> ResultEntry:
    seg = ctx.segment
    v = closest_point_audit(ctx.g, ctx.D, ctx.hatD, seg, ctx.core_vertices, ctx.cfg.gauge)
    return _from_list("closest-point-17", v, {"vertices": len(ctx.core_vertices),
                                              "segment_length": seg.length})


def audit_halfdist(ctx: Context) -> ResultEntry:
    v = projection_halfdist_audit(ctx.g, ctx.D, ctx.segment)
    return _from_list("projection-halfdist", v)


def audit_bgi(ctx: Context) -> ResultEntry:
    r = bgi_from_Q_audit(ctx.g, ctx.D, ctx.hatD, ctx.segment)
    return _entry(r.name, r.status, r.constants, r.violations)


def audit_equivalence(ctx: Context) -> ResultEntry:
    r = equivalence_audit(ctx.g, ctx.D, ctx.segment)
    consts = {"r_star": str(r.r_star), "bgi_constant": r.bgi_constant,
              "contraction_constant": r.contraction_constant, "implied_bgi": r.implied_bgi}
    return _entry("equivalence", "pass" if r.passed else "fail", consts)


def audit_quadrangle(ctx: Context) -> ResultEntry:
    delta = _delta(ctx)
    r = quadrangle_estimate_audit(ctx.g, ctx.D, ctx.hatD, ctx.cfg.gauge, ctx.cfg.estimate_radius,
                                  pairs=min(ctx.cfg.samples, 50), seed=ctx.cfg.seed,
                                  mode=ctx.cfg.mode, delta=delta.delta,
                                  vertices=ctx.core_vertices)
    r.constants["delta_source"] = "measured four-point delta: " + delta.sample
    return _entry(r.name, r.status, r.constants, r.violations)


def _delta(ctx: Context):
    return four_point_delta(ctx.hatD, samples=ctx.cfg.samples * 1000, seed=ctx.cfg.seed,
                            exhaustive=True if ctx.cfg.exhaustive else None)


def audit_delta(ctx: Context) -> ResultEntry:
    rep = _delta(ctx)
    return _entry("four-point", "pass", {"delta": rep.delta, "quadruple": list(rep.quadruple or ()),
                                         "sample": rep.sample})


def audit_qi(ctx: Context) -> ResultEntry:
    fit = qi_embedding_audit(ctx.D, ctx.hatD, ctx.segment.vertices)
    return _entry("qi-embedding", "pass", {"L": fit.L, "size": fit.size})


def audit_geodesic_image(ctx: Context) -> ResultEntry:
    rng = np.random.default_rng(ctx.cfg.seed)
    pool = np.asarray(ctx.core_vertices)
    pairs = [(int(a), int(b)) for a, b in rng.choice(pool, size=(ctx.cfg.samples, 2))]
    res = geodesic_image_audit(ctx.g, ctx.D, ctx.hat, ctx.hatD, pairs)
    return _from_list("geodesic-image", res["violations"], {"delta_meas": res["delta_meas"]})


def audit_hat_le_base(ctx: Context) -> ResultEntry:
    bad = np.argwhere(ctx.hatD > ctx.D.array)
    return _from_list("hat-le-base", [{"u": int(u), "v": int(v)} for u, v in bad[:20]])


def audit_convex_core(ctx: Context) -> ResultEntry:
    if ctx.inst.family != "zfp" or int(ctx.inst.param) <= 2:
        return _entry("convex-core", "not-applicable", {"reason": "only free-product balls of radius ≥ 3"})
    v = validate_core(ctx.inst)
    return _from_list("convex-core", [list(x) for x in v])


def audit_cone_vs_hat(ctx: Context) -> ResultEntry:
    if ctx.inst.sheets is None:
        return _entry("cone-vs-hat", "not-applicable", {"reason": "instance has no sheets"})
    res = cone_vs_hat_audit(ctx.inst, ctx.cfg.gauge, ctx.cfg.mode, workers=ctx.cfg.workers)
    viol = ([{"intra_sheet_pair": list(p)} for p in res["intra_sheet_missing"]]
            + [{"far_pair": list(p)} for p in res["far_not_separated_at_0"]])
    consts = {k: v for k, v in res.items()
              if k not in ("intra_sheet_missing", "far_not_separated_at_0", "passed")}
    status = "pass" if res["passed"] else "fail"
    return _entry("cone-vs-hat", status, consts, viol)


AUDITS = {
    "one-thin-triangles": audit_triangles,
    "closest-point-17": audit_closest_point,
    "projection-halfdist": audit_halfdist,
    "bgi-27q2": audit_bgi,
    "equivalence": audit_equivalence,
    "quadrangle-estimate": audit_quadrangle,
    "four-point": audit_delta,
    "qi-embedding": audit_qi,
    "geodesic-image": audit_geodesic_image,
    "hat-le-base": audit_hat_le_base,
    "convex-core": audit_convex_core,
    "cone-vs-hat": audit_cone_vs_hat,
}


def run_audits(cfg: RunConfig, names: list[str]) -> AuditReport:
    unknown = [n for n in names if n not in AUDITS]
    if unknown:
        raise InputError(f"unknown audit {unknown[0]!r}; choose from {', '.join(AUDITS)}")
    ctx = Context(cfg, resolve_space(cfg.space, cfg))
    report = AuditReport(dict(cfg.echo(), audits=list(names)))
    for name in names:
        start = time.perf_counter()
        log.info("running %s", name)
        entry = AUDITS[name](ctx)
        if cfg.timings:
            entry.millis = int(1000 * (time.perf_counter() - start))
        report.results.append(entry)
    ctx.save_rmin()
    return report


def resolve_space(spec: str | None, cfg: RunConfig) -> SpaceInstance:
    """A space file path, or ``family:size`` for a built-in family."""
    if not spec:
        raise InputError("--space is required")
    path = Path(spec)
    if path.exists():
        return load_space(path)
    family, sep, size = spec.partition(":")
    if sep and family in FAMILIES:
        return make_family(family, size, cfg.seed, cfg.cap_generation)
    raise InputError(f"--space {spec!r} is neither a file nor family:size")


# ---------------------------------------------------------------------------
# Commands


def cmd_gen(args, cfg: RunConfig) -> int:
    size = args.size if args.size is not None else args.radius
    if size is None:
        raise InputError("gen needs --size or --radius")
    inst = make_family(args.family, size, cfg.seed, cfg.cap_generation)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / f"{args.family}-{str(size).replace(':', '_')}.space"
    save_space(inst, path)
    print(path)
    return 0


def cmd_hat(args, cfg: RunConfig) -> int:
    ctx = Context(cfg, resolve_space(cfg.space, cfg))
    hat = ctx.hat
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "hat.txt"
    write_hat(hat, path)
    summary = {"hat": str(path), "vertices": ctx.g.vertex_count, "cone_edges": len(hat.cone_edges),
               "diameter": hat_diameter(hat), "mode": cfg.mode.value, "gauge": cfg.gauge.spec()}
    print(json.dumps(summary))
    ctx.save_rmin()
    return 0


def _emit(report: AuditReport, cfg: RunConfig, stem: str) -> int:
    jp, _ = report.write(cfg.out, stem)
    for r in report.results:
        print(f"{r.name}: {r.status}")
    print(jp)
    return 1 if report.failed else 0


def cmd_audit(args, cfg: RunConfig) -> int:
    return _emit(run_audits(cfg, args.names), cfg, "report")


def cmd_delta(args, cfg: RunConfig) -> int:
    ctx = Context(cfg, resolve_space(cfg.space, cfg))
    report = AuditReport(dict(cfg.echo(), audits=["four-point"]))
    base = four_point_delta(ctx.D, samples=cfg.samples * 1000, seed=cfg.seed,
                            exhaustive=True if cfg.exhaustive else None)
    report.results.append(_entry("four-point-base", "pass", {
        "delta": base.delta, "quadruple": list(base.quadruple or ()), "sample": base.sample}))
    hat_entry = audit_delta(ctx)
    hat_entry.name = "four-point-hat"
    report.results.append(hat_entry)
    return _emit(report, cfg, "delta")


def cmd_dichotomy(args, cfg: RunConfig) -> int:
    sizes = [s for s in args.sizes.split(",") if s]
    if not sizes:
        raise InputError("--sizes must list at least one size")
    rows = diameter_scan(args.family, sizes, cfg.gauge, cfg.mode, cfg.workers, cfg.cap_generation)
    text = "size,diameter\n" + "".join(f"{s},{d}\n" for s, d in rows)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "dichotomy.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_cone_compare(args, cfg: RunConfig) -> int:
    ctx = Context(cfg, resolve_space(cfg.space, cfg))
    report = AuditReport(dict(cfg.echo(), audits=["cone-vs-hat"]))
    report.results.append(audit_cone_vs_hat(ctx))
    return _emit(report, cfg, "cone-compare")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", help="space file or family:size (e.g. grid:8, zfp:5)")
    common.add_argument("--gauge", default="affine:10:1", help="affine:A:B or partial:R0x2:A:B")
    common.add_argument("--mode", default="thin", choices=["thin", "quad"])
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--cap-vertices", type=int, default=RunConfig.cap_vertices)
    common.add_argument("--exhaustive", action="store_true", help="force exhaustive sampling")
    common.add_argument("--samples", type=int, default=200)
    common.add_argument("--segment", help="designated segment name")
    common.add_argument("--estimate-radius", type=int, default=2)
    common.add_argument("--timings", action="store_true", help="record wall time per audit")
    common.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")

    p = argparse.ArgumentParser(prog="xhat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="generate a space file")
    g.add_argument("--family", required=True)
    g.add_argument("--size")
    g.add_argument("--radius")
    sub.add_parser("hat", parents=[common], help="build the hat graph")
    sub.add_parser("delta", parents=[common], help="four-point delta of base and hat")
    a = sub.add_parser("audit", parents=[common], help="run named audits")
    a.add_argument("names", nargs="+", help=", ".join(AUDITS))
    d = sub.add_parser("dichotomy", parents=[common], help="hat diameter across sizes")
    d.add_argument("--family", required=True)
    d.add_argument("--sizes", required=True, help="comma-separated sizes")
    sub.add_parser("cone-compare", parents=[common], help="hat vs coned-off graph vs tree")
    return p


COMMANDS = {"gen": cmd_gen, "hat": cmd_hat, "delta": cmd_delta, "audit": cmd_audit,
            "dichotomy": cmd_dichotomy, "cone-compare": cmd_cone_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        cfg = RunConfig(space=args.space, gauge=ContractionGauge.parse(args.gauge),
                        mode=Mode.parse(args.mode), seed=args.seed, workers=args.workers,
                        samples=args.samples, exhaustive=args.exhaustive,
                        cap_vertices=args.cap_vertices, out=Path(args.out),
                        segment=args.segment, estimate_radius=args.estimate_radius,
                        timings=args.timings)
        return COMMANDS[args.command](args, cfg)
    except InputError as exc:
        print(f"xhat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
