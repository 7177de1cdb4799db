"""Bitwidth report: aggregation of analysis results and rendering.

JSON is the canonical machine format (exact rational endpoints as
strings plus decimal approximations, so golden files are platform
independent); the text table mirrors the usual presentation with one
column per stage and one row per method.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction


@dataclass
class StageReport:
    name: str
    ranges: dict[str, tuple[Fraction, Fraction]] = field(default_factory=dict)
    alpha: dict[str, int] = field(default_factory=dict)
    beta: int | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class BitwidthReport:
    pipeline: str
    stages: list[StageReport]
    meta: dict = field(default_factory=dict)

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def add_method(self, method: str, results: dict) -> None:
        """Merge an analysis result map (stage -> object with .interval
        and .alpha, plus optional .fallback) under a method key."""
        for s in self.stages:
            r = results[s.name]
            s.ranges[method] = (r.interval.lo, r.interval.hi)
            s.alpha[method] = r.alpha
            if getattr(r, "fallback", False):
                s.flags.append("%s-fallback" % method)


def report_from_pipeline(p, meta: dict | None = None) -> BitwidthReport:
    return BitwidthReport(p.name, [StageReport(name) for name in p.stage_names],
                          dict(meta or {}))


def _rat_str(x: Fraction) -> str:
    return "%d/%d" % (x.numerator, x.denominator) if x.denominator != 1 else str(x.numerator)


def _rat_parse(s: str) -> Fraction:
    return Fraction(s)


def to_json_dict(r: BitwidthReport) -> dict:
    stages = []
    for s in r.stages:
        ranges = {}
        for method, (lo, hi) in sorted(s.ranges.items()):
            ranges[method] = {"lo": _rat_str(lo), "hi": _rat_str(hi),
                              "lo_approx": float(lo), "hi_approx": float(hi)}
        stages.append({"name": s.name, "ranges": ranges,
                       "alpha": dict(sorted(s.alpha.items())),
                       "beta": s.beta, "flags": sorted(s.flags)})
    return {"pipeline": r.pipeline, "stages": stages, "meta": r.meta}


def render_json(r: BitwidthReport) -> str:
    return json.dumps(to_json_dict(r), indent=2, sort_keys=False) + "\n"


def from_json(text: str) -> BitwidthReport:
    doc = json.loads(text)
    stages = []
    for sd in doc["stages"]:
        ranges = {m: (_rat_parse(v["lo"]), _rat_parse(v["hi"]))
                  for m, v in sd.get("ranges", {}).items()}
        stages.append(StageReport(sd["name"], ranges,
                                  {m: int(a) for m, a in sd.get("alpha", {}).items()},
                                  sd.get("beta"), list(sd.get("flags", []))))
    return BitwidthReport(doc["pipeline"], stages, doc.get("meta", {}))


def _methods(r: BitwidthReport) -> list[str]:
    seen: list[str] = []
    for s in r.stages:
        for m in s.alpha:
            if m not in seen:
                seen.append(m)
    return seen


def render_text(r: BitwidthReport) -> str:
    """Stage columns, one alpha row per method, one beta row if set."""
    methods = _methods(r)
    names = [s.name for s in r.stages]
    rows = [["stage"] + names]
    for m in methods:
        rows.append(["alpha^%s" % m] +
                    [str(s.alpha.get(m, "-")) for s in r.stages])
    if any(s.beta is not None for s in r.stages):
        rows.append(["beta"] + [str(s.beta) if s.beta is not None else "-"
                                for s in r.stages])
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    out = io.StringIO()
    out.write("pipeline: %s\n" % r.pipeline)
    for k, row in enumerate(rows):
        out.write("  ".join(c.rjust(w) for c, w in zip(row, widths)) + "\n")
        if k == 0:
            out.write("-" * (sum(widths) + 2 * (len(widths) - 1)) + "\n")
    flagged = [(s.name, f) for s in r.stages for f in s.flags]
    for name, f in flagged:
        out.write("note: %s: %s\n" % (name, f))
    return out.getvalue()


def render_csv(r: BitwidthReport) -> str:
    """Long form: method,stage,lo,hi,alpha,beta — plotter friendly."""
    lines = ["method,stage,lo,hi,alpha,beta"]
    for s in r.stages:
        beta = "" if s.beta is None else str(s.beta)
        for m in _methods(r):
            if m not in s.alpha:
                continue
            lo, hi = s.ranges.get(m, ("", ""))
            lines.append("%s,%s,%s,%s,%d,%s"
                         % (m, s.name, float(lo) if lo != "" else "",
                            float(hi) if hi != "" else "", s.alpha[m], beta))
    return "\n".join(lines) + "\n"


def render(r: BitwidthReport, fmt: str) -> str:
    if fmt in ("table-text", "text"):
        return render_text(r)
    if fmt == "json":
        return render_json(r)
    if fmt == "csv":
        return render_csv(r)
    raise ValueError("unknown report format %r" % fmt)
