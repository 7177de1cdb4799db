"""Command-line front end.

Subcommands: analyze, profile, search-beta, simulate, emit-smt, report,
benchmark. Exit codes: 0 success, 1 usage error, 2 analysis or pipeline
error, 3 solver failure with no fallback.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shlex
import sys
from fractions import Fraction
from pathlib import Path

from . import benchmarks, ir, report as rpt
from .affine import analyze_affine
from .fixedpoint import FixedPointFormat
from .images import ImageSample, load_image_dir, save_pgm, synthesize_images
from .interval import DivisionThroughZero, analyze_interval
from .metrics import MetricError
from .precision import QualityTarget, TargetUnreachable, quality_curve, search_beta
from .profiler import EvaluationError, cumulative_distribution, profile, profile_ranges
from .simulator import TypeAssignment, simulate
from .smtrange import (BoundSearchConfig, SolverError, analyze_smt,
                       as_stage_ranges, build_constraints, emit_smtlib)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ANALYSIS = 2
EXIT_SOLVER = 3

SOLVER_ENV = "PIPEBITS_SOLVER"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


class UsageError(Exception):
    pass


def _add_pipeline_args(sp) -> None:
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--pipeline", help="pipeline JSON file")
    g.add_argument("--benchmark", help="built-in pipeline: hcd|usm|dus|of:<k>")
    sp.add_argument("--rows", type=int, default=64, help="grid rows (benchmarks)")
    sp.add_argument("--cols", type=int, default=64, help="grid cols (benchmarks)")


def _add_image_args(sp) -> None:
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--images", help="directory of .pgm/.json sample images")
    g.add_argument("--synthesize", type=int, metavar="N",
                   help="generate N textured sample images")
    sp.add_argument("--seed", type=int, default=0, help="synthetic image seed")
    sp.add_argument("--feature", type=int, default=8,
                    help="synthetic texture feature size in pixels")
    sp.add_argument("--texture", default="smooth", choices=("smooth", "blobs"),
                    help="synthetic texture style")


def _add_solver_args(sp) -> None:
    sp.add_argument("--solver", help="external SMT solver command "
                                     "(default: $%s)" % SOLVER_ENV)
    sp.add_argument("--no-solver", action="store_true",
                    help="force the built-in branch-and-bound backend")
    sp.add_argument("--epsilon", default="1/16",
                    help="bound search width floor (rational)")
    sp.add_argument("--timeout", type=float, default=30.0,
                    help="per-query solver timeout in seconds")
    sp.add_argument("--on-solver-error", choices=("bnb", "interval", "fail"),
                    default="bnb", help="fallback when the solver misbehaves")


def _load_pipeline(args) -> ir.Pipeline:
    if args.pipeline:
        return ir.parse_pipeline(Path(args.pipeline).read_text())
    return benchmarks.build(args.benchmark, args.rows, args.cols)


def _load_samples(p: ir.Pipeline, args) -> list:
    if args.images:
        imgs = load_image_dir(args.images)
    else:
        if args.synthesize < 1:
            raise UsageError("--synthesize wants a positive count")
        imgs = synthesize_images(args.synthesize, p.rows, p.cols, args.seed,
                                 args.feature, args.texture)
    for img in imgs:
        if img.rows != p.rows or img.cols != p.cols:
            raise UsageError("image %r is %dx%d but the pipeline grid is %dx%d"
                             % (img.id, img.rows, img.cols, p.rows, p.cols))
    return imgs


def _solver_cfg(args) -> BoundSearchConfig:
    cmd = None
    if not args.no_solver:
        raw = args.solver or os.environ.get(SOLVER_ENV)
        if raw:
            cmd = tuple(shlex.split(raw))
    on_error = {"fail": "raise"}.get(args.on_solver_error, args.on_solver_error)
    return BoundSearchConfig(epsilon=Fraction(args.epsilon), timeout=args.timeout,
                             solver_cmd=cmd, on_solver_error=on_error)


def _analyses(p: ir.Pipeline, methods: list[str], args,
              samples=None) -> dict[str, dict]:
    out = {}
    for m in methods:
        if m == "interval":
            out[m] = analyze_interval(p)
        elif m == "affine":
            out[m] = analyze_affine(p)
        elif m == "smt":
            out[m] = analyze_smt(p, _solver_cfg(args))
        elif m == "profile":
            stats = profile(p, samples)
            out["profile-max"] = profile_ranges(stats)
        else:
            raise UsageError("unknown method %r" % m)
    return out


def _write_reports(r: rpt.BitwidthReport, outdir: str) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / ("%s.report.json" % r.pipeline)).write_text(rpt.render_json(r))
    (out / ("%s.report.txt" % r.pipeline)).write_text(rpt.render_text(r))
    (out / ("%s.report.csv" % r.pipeline)).write_text(rpt.render_csv(r))
    return out / ("%s.report.json" % r.pipeline)


def cmd_analyze(args) -> int:
    p = _load_pipeline(args)
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    if not methods:
        raise UsageError("--method needs at least one of interval,affine,smt")
    if "profile" in methods:
        raise UsageError("use the profile subcommand for profile-driven analysis")
    results = _analyses(p, methods, args)
    r = rpt.report_from_pipeline(p, meta=_run_meta(args))
    for m, res in results.items():
        r.add_method(m, res)
    path = _write_reports(r, args.out)
    sys.stdout.write(rpt.render_text(r))
    print("wrote %s" % path)
    return EXIT_OK


def _run_meta(args) -> dict:
    meta = {"epsilon": getattr(args, "epsilon", None),
            "rounding": getattr(args, "rounding", None),
            "overflow": getattr(args, "overflow", None),
            "seed": getattr(args, "seed", None)}
    if getattr(args, "no_solver", False):
        meta["solver"] = "bnb"
    elif getattr(args, "solver", None) or os.environ.get(SOLVER_ENV):
        meta["solver"] = getattr(args, "solver", None) or os.environ.get(SOLVER_ENV)
    return {k: v for k, v in meta.items() if v is not None}


def cmd_profile(args) -> int:
    p = _load_pipeline(args)
    samples = _load_samples(p, args)
    stats = profile(p, samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"pipeline": p.name, "samples": list(stats.sample_ids), "stages": {}}
    for name, sp in stats.stages.items():
        doc["stages"][name] = {
            "alpha_max": sp.alpha_max, "alpha_avg": sp.alpha_avg,
            "per_sample_alpha": list(sp.per_sample_alpha),
            "observed_lo": str(sp.observed_lo), "observed_hi": str(sp.observed_hi),
        }
    (out / ("%s.profile.json" % p.name)).write_text(json.dumps(doc, indent=2) + "\n")
    lines = ["stage,bits,fraction"]
    for name in p.stage_names:
        for b, frac in cumulative_distribution(stats, name):
            lines.append("%s,%d,%.6f" % (name, b, float(frac)))
    (out / ("%s.hist.csv" % p.name)).write_text("\n".join(lines) + "\n")
    print("stage       alpha_max  alpha_avg")
    for name in p.stage_names:
        sp = stats.stages[name]
        print("%-12s %8d %10d" % (name, sp.alpha_max, sp.alpha_avg))
    print("wrote %s" % (out / ("%s.profile.json" % p.name)))
    return EXIT_OK


def _target_from_args(args) -> QualityTarget:
    value = math.inf if args.target in ("inf", "infinity") else float(args.target)
    return QualityTarget(args.metric, value, stage=args.stage,
                         threshold=Fraction(args.threshold), peak=Fraction(args.peak))


def _ranges_for(p, args, samples):
    key = args.alpha_from
    if key == "profile":
        return profile_ranges(profile(p, samples))
    if key == "smt":
        return as_stage_ranges(analyze_smt(p, _solver_cfg(args)))
    if key == "affine":
        return analyze_affine(p)
    return analyze_interval(p)


def cmd_search_beta(args) -> int:
    p = _load_pipeline(args)
    samples = _load_samples(p, args)
    target = _target_from_args(args)
    ranges = _ranges_for(p, args, samples)
    res = search_beta(p, ranges, target, samples, beta_max=args.beta_max,
                      rounding=args.rounding, overflow=args.overflow)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"pipeline": p.name, "metric": target.metric, "target": repr(target.value),
           "alpha_from": args.alpha_from, "uniform_beta": res.uniform_beta,
           "betas": {s: res.betas[s] for s in p.stage_names},
           "alphas": {s: res.alphas[s] for s in p.stage_names},
           "quality": res.quality.value, "evaluations": res.evaluations}
    path = out / ("%s.betas.json" % p.name)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print("uniform beta*: %d" % res.uniform_beta)
    print("stage        alpha  beta")
    for s in p.stage_names:
        print("%-12s %5d %5d" % (s, res.alphas[s], res.betas[s]))
    print("quality %s = %s (target %s)" % (target.metric, res.quality.value,
                                           target.value))
    print("wrote %s" % path)
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _load_pipeline(args)
    samples = _load_samples(p, args)
    ranges = _ranges_for(p, args, samples)
    if args.beta_file:
        betas = {k: int(v) for k, v in
                 json.loads(Path(args.beta_file).read_text())["betas"].items()}
    else:
        betas = {name: args.beta for name in ranges}
    formats = {}
    for name, rng in ranges.items():
        alpha = rng.alpha if rng.alpha + betas[name] >= 1 else 1
        formats[name] = FixedPointFormat(alpha, betas[name], rng.interval.lo < 0)
    t = TypeAssignment(formats, args.rounding, args.overflow)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate(p, t, samples[0])
    for name in p.stage_names:
        grid = sim.decoded(name)
        if args.format == "json":
            (out / ("%s.%s.json" % (p.name, name))).write_text(json.dumps(
                [[str(v) if v is not None else None for v in row] for row in grid])
                + "\n")
        else:
            save_pgm(_to_pgm_image(name, grid), out / ("%s.%s.pgm" % (p.name, name)))
    print("sample: %s" % samples[0].id)
    print("stage        format      saturations")
    for name in p.stage_names:
        print("%-12s %-10s %12d" % (name, t.formats[name],
                                    sim.saturation_events[name]))
    print("total saturations: %d" % sim.total_saturations)
    return EXIT_OK


def _to_pgm_image(name: str, grid) -> ImageSample:
    vals = [float(v) for row in grid for v in row if v is not None]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    span = (hi - lo) or 1.0
    rows = []
    for row in grid:
        rows.append([int(round((float(v) - lo) / span * 255)) if v is not None else 0
                     for v in row])
    return ImageSample(name, tuple(tuple(r) for r in rows))


def cmd_emit_smt(args) -> int:
    p = _load_pipeline(args)
    stage = p.stage(args.stage)
    if not isinstance(stage, ir.PointwiseStage):
        raise UsageError("constraint systems exist for point-wise stages only; "
                         "%r is not one" % args.stage)
    prior = {k: v.interval for k, v in analyze_interval(p).items()}
    cs = build_constraints(p, args.stage, prior)
    script = emit_smtlib(cs, args.side, Fraction(args.bound))
    if args.out:
        Path(args.out).write_text(script)
        print("wrote %s" % args.out)
    else:
        sys.stdout.write(script)
    return EXIT_OK


def cmd_report(args) -> int:
    r = rpt.from_json(Path(args.input).read_text())
    sys.stdout.write(rpt.render(r, args.format))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.action != "export":
        raise UsageError("unknown benchmark action %r" % args.action)
    p = benchmarks.build(args.benchmark, args.rows, args.cols)
    text = ir.serialize_pipeline(p)
    if args.out:
        Path(args.out).write_text(text)
        print("wrote %s" % args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> _Parser:
    ap = _Parser(prog="pipebits",
                 description="fixed-point bitwidth analysis for image pipelines")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("analyze", parents=[], help="static range analyses")
    _add_pipeline_args(sp)
    sp.add_argument("--method", default="interval",
                    help="comma list of interval,affine,smt")
    _add_solver_args(sp)
    sp.add_argument("--out", default=".", help="report output directory")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("profile", help="profile-driven analysis on images")
    _add_pipeline_args(sp)
    _add_image_args(sp)
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("search-beta", help="fractional bitwidth search")
    _add_pipeline_args(sp)
    _add_image_args(sp)
    sp.add_argument("--metric", required=True,
                    choices=("corners", "mask", "psnr", "aae"))
    sp.add_argument("--target", required=True,
                    help="quality target value (or inf)")
    sp.add_argument("--stage", help="metric stage override")
    sp.add_argument("--threshold", default="0", help="corner response threshold")
    sp.add_argument("--peak", default="255", help="psnr peak value")
    sp.add_argument("--alpha-from", default="interval",
                    choices=("interval", "affine", "smt", "profile"))
    sp.add_argument("--beta-max", type=int, default=16)
    sp.add_argument("--rounding", default="truncate",
                    choices=("truncate", "nearest-even"))
    sp.add_argument("--overflow", default="saturate", choices=("saturate", "wrap"))
    _add_solver_args(sp)
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_search_beta)

    sp = sub.add_parser("simulate", help="fixed-point simulation")
    _add_pipeline_args(sp)
    _add_image_args(sp)
    sp.add_argument("--alpha-from", default="interval",
                    choices=("interval", "affine", "smt", "profile"))
    sp.add_argument("--beta", type=int, default=8, help="uniform fractional bits")
    sp.add_argument("--beta-file", help="betas JSON from search-beta")
    sp.add_argument("--rounding", default="truncate",
                    choices=("truncate", "nearest-even"))
    sp.add_argument("--overflow", default="saturate", choices=("saturate", "wrap"))
    sp.add_argument("--format", default="pgm", choices=("pgm", "json"))
    _add_solver_args(sp)
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("emit-smt", help="dump one bound-query script")
    _add_pipeline_args(sp)
    sp.add_argument("--stage", required=True)
    sp.add_argument("--side", required=True, choices=("upper", "lower"))
    sp.add_argument("--bound", required=True, help="bound constant (rational)")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(func=cmd_emit_smt)

    sp = sub.add_parser("report", help="re-render a report JSON")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", default="text", choices=("text", "json", "csv"))
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("benchmark", help="built-in pipeline utilities")
    sp.add_argument("action", choices=("export",))
    sp.add_argument("--benchmark", required=True)
    sp.add_argument("--rows", type=int, default=64)
    sp.add_argument("--cols", type=int, default=64)
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER
    except (ir.PipelineError, DivisionThroughZero, EvaluationError, MetricError,
            TargetUnreachable, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
