"""Run configuration and audit report serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import InputError
from .hat import DEFAULT_GAUGE, ContractionGauge, Mode
from .spaces import DEFAULT_GENERATION_CAP, DEFAULT_SWEEP_CAP

REPORT_SCHEMA = 1


@dataclass(frozen=True)
class RunConfig:
    space: str | None = None
    gauge: ContractionGauge = DEFAULT_GAUGE
    mode: Mode = Mode.THIN
    seed: int = 0
    workers: int = 1
    samples: int = 200
    exhaustive: bool = False
    cap_vertices: int = DEFAULT_SWEEP_CAP
    cap_generation: int = DEFAULT_GENERATION_CAP
    out: Path = Path(".")
    segment: str | None = None
    estimate_radius: int = 2
    timings: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise InputError("--workers must be at least 1")
        if self.samples < 1:
            raise InputError("--samples must be at least 1")
        if self.seed < 0:
            raise InputError("--seed must be nonnegative")
        if self.cap_vertices < 2:
            raise InputError("--cap-vertices must be at least 2")
        if self.estimate_radius < 1:
            raise InputError("--estimate-radius must be at least 1")

    def echo(self) -> dict:
        """Config fields that can influence results; the worker count cannot."""
        return {
            "space": self.space,
            "gauge": self.gauge.spec(),
            "mode": self.mode.value,
            "seed": self.seed,
            "samples": self.samples,
            "exhaustive": self.exhaustive,
            "cap_vertices": self.cap_vertices,
            "segment": self.segment,
            "estimate_radius": self.estimate_radius,
        }


def _plain(value):
    if isinstance(value, Fraction):
        return str(value) if value.denominator != 1 else value.numerator
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


@dataclass
class ResultEntry:
    name: str
    status: str
    constants: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    millis: int | None = None

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "constants": _plain(self.constants),
                "violations": _plain(self.violations), "millis": self.millis}


@dataclass
class AuditReport:
    config: dict
    results: list[ResultEntry] = field(default_factory=list)
    version: str = __version__

    @property
    def failed(self) -> bool:
        return any(r.status == "fail" for r in self.results)

    def to_json(self) -> str:
        doc = {"version": self.version, "schema": REPORT_SCHEMA, "config": _plain(self.config),
               "results": [r.to_json() for r in self.results]}
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        keys = sorted({k for r in self.results for k in _flatten(_plain(r.constants))})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "status", "violations", "millis"] + [f"constants.{k}" for k in keys])
        for r in self.results:
            flat = _flatten(_plain(r.constants))
            w.writerow([r.name, r.status, len(r.violations), "" if r.millis is None else r.millis]
                       + [flat.get(k, "") for k in keys])
        return buf.getvalue()

    def write(self, out: Path, stem: str = "report") -> tuple[Path, Path]:
        out.mkdir(parents=True, exist_ok=True)
        jp, cp = out / f"{stem}.json", out / f"{stem}.csv"
        jp.write_text(self.to_json(), encoding="utf-8")
        cp.write_text(self.to_csv(), encoding="utf-8")
        return jp, cp


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out
