"""Bit-exact fixed-point evaluation of a pipeline.

Each stage's expression (or stencil sum) is computed on the exact
decoded values of its predecessors, then quantized once into the
stage's output format: one quantization per stage boundary, never per
arithmetic node. Saturation events are counted so analyses can be
checked end to end (a sound integral width must never clamp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .fixedpoint import (SATURATE, TRUNCATE, FixedPointFormat,
                         FixedPointValue, _round_half_even)
from .profiler import EvaluationError, bind_inputs, _check_input


@dataclass
class TypeAssignment:
    """Per-stage formats plus the run-wide rounding/overflow policy."""

    formats: dict[str, FixedPointFormat]
    rounding: str = TRUNCATE
    overflow: str = SATURATE

    def validate(self, p: ir.Pipeline) -> None:
        for s in p.stages:
            if s.name not in self.formats:
                raise ValueError("no format assigned to stage %r" % s.name)
        for s in p.input_stages():
            f = self.formats[s.name]
            if Fraction(s.lo) < f.min_value or Fraction(s.hi) > f.max_value:
                raise ValueError("input %r range [%s, %s] not representable in %s"
                                 % (s.name, s.lo, s.hi, f))


def uniform_assignment(alpha_map: dict[str, int], signed_map: dict[str, bool],
                       beta, rounding=TRUNCATE, overflow=SATURATE) -> TypeAssignment:
    """Formats from per-stage alpha/signedness and a beta plan (an int
    for uniform fractional bits, or a per-stage map)."""
    formats = {}
    for name, alpha in alpha_map.items():
        b = beta[name] if isinstance(beta, dict) else int(beta)
        a = alpha
        if a + b < 1:
            a = 1  # keep at least one bit of storage
        formats[name] = FixedPointFormat(a, b, signed_map[name])
    return TypeAssignment(formats)


def signedness_from_ranges(ranges) -> dict[str, bool]:
    return {name: rng.interval.lo < 0 for name, rng in ranges.items()}


def alphas_from_ranges(ranges) -> dict[str, int]:
    return {name: rng.alpha for name, rng in ranges.items()}


@dataclass
class SimulationResult:
    values: dict[str, list]  # per stage: rows of FixedPointValue | None
    saturation_events: dict[str, int]

    def decoded(self, stage: str) -> list:
        return [[v.decode() if v is not None else None for v in row]
                for row in self.values[stage]]

    @property
    def total_saturations(self) -> int:
        return sum(self.saturation_events.values())


class _StageQuantizer:
    """Quantizes one stage's exact values, counting overflow events."""

    def __init__(self, fmt: FixedPointFormat, rounding: str, overflow: str):
        self.fmt = fmt
        self.rounding = rounding
        self.overflow = overflow
        self.events = 0

    def __call__(self, x: Fraction) -> FixedPointValue:
        units = x * (1 << self.fmt.beta)
        raw = math.floor(units) if self.rounding == TRUNCATE else _round_half_even(units)
        if raw < self.fmt.raw_min or raw > self.fmt.raw_max:
            self.events += 1
            if self.overflow == SATURATE:
                raw = min(max(raw, self.fmt.raw_min), self.fmt.raw_max)
            else:
                width = self.fmt.width
                raw %= 1 << width
                if self.fmt.signed and raw >= 1 << (width - 1):
                    raw -= 1 << width
        return FixedPointValue(self.fmt, raw)


def simulate(p: ir.Pipeline, t: TypeAssignment, sample) -> SimulationResult:
    """Run the pipeline on one sample under the type assignment."""
    t.validate(p)
    images = bind_inputs(p, sample)
    values: dict[str, list] = {}
    dims: dict[str, tuple[int, int]] = {}
    events: dict[str, int] = {}
    for s in ir.topo_order(p):
        dims[s.name] = ir.stage_dims(p, dims, s)
        rows, cols = dims[s.name]
        q = _StageQuantizer(t.formats[s.name], t.rounding, t.overflow)
        if isinstance(s, ir.InputStage):
            img = images[s.name]
            _check_input(s, img, p)
            grid = [[q(Fraction(v)) for v in row] for row in img.pixels]
        elif isinstance(s, ir.StencilStage):
            grid = _sim_stencil(s, values[s.input], rows, cols, q)
        else:
            grid = _sim_pointwise(s, values, rows, cols, q)
        values[s.name] = grid
        events[s.name] = q.events
    return SimulationResult(values, events)


def _sim_stencil(s: ir.StencilStage, src, rows, cols, q) -> list:
    in_rows, in_cols = len(src), len(src[0])
    grid = []
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
                    acc += c * v.decode()
            row.append(q(acc * s.kernel.scale) if ok else None)
        grid.append(row)
    return grid


def _sim_pointwise(s: ir.PointwiseStage, values, rows, cols, q) -> list:
    grid = []
    for i in range(rows):
        row = []
        for j in range(cols):
            vals = {}
            ok = True
            for ref in ir.expr_refs(s.expr):
                v = values[ref.stage][i][j]
                if v is None:
                    ok = False
                    break
                vals[ref.stage] = v.decode()
            if not ok:
                row.append(None)
                continue
            try:
                exact = ir.eval_expr(s.expr, lambda r: vals[r.stage])
            except ZeroDivisionError:
                raise EvaluationError("division by zero at stage %r pixel (%d,%d)"
                                      % (s.name, i, j)) from None
            row.append(q(exact))
        grid.append(row)
    return grid
