"""Profile-driven bit requirements from an exact reference evaluator.

The pipeline is run on sample images with exact rational arithmetic,
recording per-stage magnitude statistics: per-sample bit needs, their
max and (half-up rounded) average over the sample set, and cumulative
per-pixel bit distributions. These are empirical lower bounds on what
any sound static analysis can report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .fixedpoint import alpha_from_range
from .images import ImageSample, shift_image


class EvaluationError(Exception):
    pass


class UndersizedImageError(EvaluationError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__("image too small: stage %r has no valid pixels" % stage)


Grid = list  # list of rows; cells are Fraction or None outside the valid domain


def bind_inputs(p: ir.Pipeline, sample) -> dict[str, ImageSample]:
    """Map a sample onto the pipeline's input stages.

    A dict is used as-is. A single image feeds the first input; for
    two-input pipelines the second frame defaults to a one-pixel
    horizontal shift of the first.
    """
    inputs = p.input_stages()
    if isinstance(sample, dict):
        missing = [s.name for s in inputs if s.name not in sample]
        if missing:
            raise EvaluationError("sample lacks images for inputs %s" % missing)
        return {s.name: sample[s.name] for s in inputs}
    if len(inputs) == 1:
        return {inputs[0].name: sample}
    if len(inputs) == 2:
        return {inputs[0].name: sample, inputs[1].name: shift_image(sample, 1)}
    raise EvaluationError("pipeline %r has %d inputs; provide a dict sample"
                          % (p.name, len(inputs)))


def _check_input(s: ir.InputStage, img: ImageSample, p: ir.Pipeline) -> None:
    if img.rows != p.rows or img.cols != p.cols:
        raise EvaluationError("input %r: image %r is %dx%d, pipeline wants %dx%d"
                              % (s.name, img.id, img.rows, img.cols, p.rows, p.cols))
    if not img.check_in_range(s.lo, s.hi):
        raise EvaluationError("input %r: image %r has pixels outside [%s, %s]"
                              % (s.name, img.id, s.lo, s.hi))


def eval_reference(p: ir.Pipeline, sample) -> dict[str, Grid]:
    """Exact rational stage outputs; None marks pixels outside a stage's
    valid domain (stencils are defined only where the window fits)."""
    images = bind_inputs(p, sample)
    out: dict[str, Grid] = {}
    dims: dict[str, tuple[int, int]] = {}
    for s in ir.topo_order(p):
        dims[s.name] = ir.stage_dims(p, dims, s)
        rows, cols = dims[s.name]
        if isinstance(s, ir.InputStage):
            img = images[s.name]
            _check_input(s, img, p)
            grid = [[Fraction(v) for v in row] for row in img.pixels]
        elif isinstance(s, ir.StencilStage):
            grid = _eval_stencil(s, out[s.input], rows, cols)
        else:
            grid = _eval_pointwise(s, out, rows, cols)
        if not any(v is not None for row in grid for v in row):
            raise UndersizedImageError(s.name)
        out[s.name] = grid
    return out


def _eval_stencil(s: ir.StencilStage, src: Grid, rows: int, cols: int) -> Grid:
    in_rows, in_cols = len(src), len(src[0])
    grid: Grid = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = Fraction(0)
            ok = True
            for ii, jj, c in ir.stencil_tap_positions(s, i, j):
                if not (0 <= ii < in_rows and 0 <= jj < in_cols):
                    ok = False
                    break
                v = src[ii][jj]
                if v is None:
                    ok = False
                    break
                if c != 0:
                    acc += c * v
            row.append(acc * s.kernel.scale if ok else None)
        grid.append(row)
    return grid


def _eval_pointwise(s: ir.PointwiseStage, out: dict[str, Grid],
                    rows: int, cols: int) -> Grid:
    grid: Grid = []
    for i in range(rows):
        row = []
        for j in range(cols):
            vals = {}
            ok = True
            for ref in ir.expr_refs(s.expr):
                v = out[ref.stage][i][j]
                if v is None:
                    ok = False
                    break
                vals[ref.stage] = v
            if not ok:
                row.append(None)
                continue
            try:
                row.append(ir.eval_expr(s.expr, lambda r: vals[r.stage]))
            except ZeroDivisionError:
                raise EvaluationError("division by zero at stage %r pixel (%d,%d)"
                                      % (s.name, i, j)) from None
        grid.append(row)
    return grid


def grid_min_max(grid: Grid):
    lo = hi = None
    for row in grid:
        for v in row:
            if v is None:
                continue
            if lo is None or v < lo:
                lo = v
            if hi is None or v > hi:
                hi = v
    return lo, hi


def value_bits(v: Fraction, signed: bool) -> int:
    """Integral bits one pixel needs under the stage's signedness."""
    if v < 0:
        return ir.ceil_log2(math.ceil(-v)) + 1
    bits = ir.ceil_log2(math.floor(v) + 1)
    return bits + 1 if signed else bits


@dataclass(frozen=True)
class StageProfile:
    per_sample_alpha: tuple[int, ...]
    alpha_max: int
    alpha_avg: int
    observed_lo: Fraction
    observed_hi: Fraction
    cumulative: tuple[Fraction, ...]  # index b: fraction of pixels needing <= b bits


@dataclass(frozen=True)
class ProfileStats:
    sample_ids: tuple[str, ...]
    stages: dict[str, StageProfile]


def profile(p: ir.Pipeline, samples) -> ProfileStats:
    """Aggregate per-stage bit statistics over a non-empty sample set."""
    if not samples:
        raise ValueError("empty sample set")
    per_stage_alphas: dict[str, list[int]] = {s.name: [] for s in p.stages}
    per_stage_hist: dict[str, list[list[int]]] = {s.name: [] for s in p.stages}
    per_stage_bounds: dict[str, list] = {s.name: [None, None] for s in p.stages}
    ids = []
    for sample in samples:
        ids.append(sample.id if isinstance(sample, ImageSample) else
                   "+".join(img.id for img in sample.values()))
        ref = eval_reference(p, sample)
        for name, grid in ref.items():
            lo, hi = grid_min_max(grid)
            alpha = alpha_from_range(lo, hi)
            per_stage_alphas[name].append(alpha)
            bounds = per_stage_bounds[name]
            bounds[0] = lo if bounds[0] is None else min(bounds[0], lo)
            bounds[1] = hi if bounds[1] is None else max(bounds[1], hi)
            signed = lo < 0
            counts = [0] * (alpha + 1)
            for row in grid:
                for v in row:
                    if v is not None:
                        counts[value_bits(v, signed)] += 1
            per_stage_hist[name].append(counts)

    stages = {}
    n = len(samples)
    for name in per_stage_alphas:
        alphas = per_stage_alphas[name]
        amax = max(alphas)
        avg = Fraction(sum(alphas), n)
        aavg = math.floor(avg + Fraction(1, 2))  # round half up
        width = amax + 1
        cum = [Fraction(0)] * width
        for counts in per_stage_hist[name]:
            total = sum(counts)
            running = 0
            for b in range(width):
                running += counts[b] if b < len(counts) else 0
                cum[b] += Fraction(running, total)
        cum = [c / n for c in cum]
        lo, hi = per_stage_bounds[name]
        stages[name] = StageProfile(tuple(alphas), amax, aavg, lo, hi, tuple(cum))
    return ProfileStats(tuple(ids), stages)


def cumulative_distribution(stats: ProfileStats, stage: str) -> list[tuple[int, Fraction]]:
    """(bits, cumulative pixel fraction) pairs, monotone and ending at 1."""
    if stage not in stats.stages:
        raise KeyError("stage %r was not profiled" % stage)
    prof = stats.stages[stage]
    return [(b, prof.cumulative[b]) for b in range(len(prof.cumulative))]


def profile_ranges(stats: ProfileStats) -> dict:
    """Observed ranges and worst-case alphas in the same shape the
    static analyses return, so reports and format builders can reuse
    them."""
    from .interval import Interval, StageRange

    return {name: StageRange(Interval(sp.observed_lo, sp.observed_hi), sp.alpha_max)
            for name, sp in stats.stages.items()}
