"""Interval range propagation over the pipeline DAG.

Operands are treated as independent intervals (correlation-blind), with
the classic five rules: endpoint sums, four-corner products, reciprocal
division when the denominator excludes zero, and the odd/even power
split. Stages are visited in topological order; stencils use the
coefficient-sign fast path instead of expanding a giant expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .fixedpoint import alpha_from_range


class DivisionThroughZero(Exception):
    """Denominator interval contains zero; carries the offending stage."""

    def __init__(self, stage: str | None = None):
        self.stage = stage
        super().__init__("division through zero" + (" at stage %r" % stage if stage else ""))


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty interval [%s, %s]" % (self.lo, self.hi))

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @staticmethod
    def point(x) -> "Interval":
        f = Fraction(x)
        return Interval(f, f)

    @staticmethod
    def hull(a: "Interval", b: "Interval") -> "Interval":
        return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo - b.hi, a.hi - b.lo)


def iv_mul(a: Interval, b: Interval) -> Interval:
    corners = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return Interval(min(corners), max(corners))


def iv_div(a: Interval, b: Interval) -> Interval:
    if b.lo <= 0 <= b.hi:
        raise DivisionThroughZero()
    return iv_mul(a, Interval(1 / b.hi, 1 / b.lo))


def iv_pow(a: Interval, n: int) -> Interval:
    if n % 2 == 1:
        return Interval(a.lo ** n, a.hi ** n)
    if a.lo >= 0:
        return Interval(a.lo ** n, a.hi ** n)
    if a.hi < 0:
        return Interval(a.hi ** n, a.lo ** n)
    return Interval(Fraction(0), max(a.lo ** n, a.hi ** n))


def iv_neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def iv_abs(a: Interval) -> Interval:
    if a.lo >= 0:
        return a
    if a.hi <= 0:
        return iv_neg(a)
    return Interval(Fraction(0), max(-a.lo, a.hi))


def iv_apply(op: str, args, n: int | None = None) -> Interval:
    """Apply one rule by node kind; Select hulls its two branches."""
    if op == "add":
        return iv_add(args[0], args[1])
    if op == "sub":
        return iv_sub(args[0], args[1])
    if op == "mul":
        return iv_mul(args[0], args[1])
    if op == "div":
        return iv_div(args[0], args[1])
    if op == "pow":
        if n is None:
            raise ValueError("pow needs an exponent")
        return iv_pow(args[0], n)
    if op == "neg":
        return iv_neg(args[0])
    if op == "abs":
        return iv_abs(args[0])
    if op == "select":
        return Interval.hull(args[-2], args[-1])
    if op in ("lt", "le"):
        return Interval(Fraction(0), Fraction(1))
    raise ValueError("unknown op %r" % op)


def eval_expr_interval(e: ir.Expr, env) -> Interval:
    """Natural interval extension of an expression.

    env(StageRef) -> Interval supplies leaves. Each ref occurrence is an
    independent interval, which is what makes x - x come out as a
    symmetric band rather than zero.
    """
    if isinstance(e, ir.Const):
        return Interval.point(e.value)
    if isinstance(e, ir.StageRef):
        return env(e)
    if isinstance(e, ir.Add):
        return iv_add(eval_expr_interval(e.lhs, env), eval_expr_interval(e.rhs, env))
    if isinstance(e, ir.Sub):
        return iv_sub(eval_expr_interval(e.lhs, env), eval_expr_interval(e.rhs, env))
    if isinstance(e, ir.Mul):
        return iv_mul(eval_expr_interval(e.lhs, env), eval_expr_interval(e.rhs, env))
    if isinstance(e, ir.Div):
        return iv_div(eval_expr_interval(e.lhs, env), eval_expr_interval(e.rhs, env))
    if isinstance(e, ir.Pow):
        return iv_pow(eval_expr_interval(e.base, env), e.n)
    if isinstance(e, ir.Neg):
        return iv_neg(eval_expr_interval(e.arg, env))
    if isinstance(e, ir.Abs):
        return iv_abs(eval_expr_interval(e.arg, env))
    if isinstance(e, ir.Cmp):
        return Interval(Fraction(0), Fraction(1))
    if isinstance(e, ir.Select):
        then = eval_expr_interval(e.then, env)
        other = eval_expr_interval(e.other, env)
        return Interval.hull(then, other)
    raise TypeError("not an expression: %r" % (e,))


def stencil_interval(kernel: ir.StencilKernel, inp: Interval) -> Interval:
    """Range of scale * sum(coeff * tap) with independent taps.

    Equivalent to expanding the window into an expression, but linear in
    kernel size: positive coefficients pull from one endpoint, negative
    from the other, then the scale flips once if negative.
    """
    lo = Fraction(0)
    hi = Fraction(0)
    for row in kernel.coeffs:
        for c in row:
            if c > 0:
                lo += c * inp.lo
                hi += c * inp.hi
            elif c < 0:
                lo += c * inp.hi
                hi += c * inp.lo
    lo *= kernel.scale
    hi *= kernel.scale
    if kernel.scale < 0:
        lo, hi = hi, lo
    return Interval(lo, hi)


@dataclass(frozen=True)
class StageRange:
    interval: Interval
    alpha: int


def analyze_interval(p: ir.Pipeline) -> dict[str, StageRange]:
    """Per-stage intervals and integral bitwidths, in topological order."""
    out: dict[str, StageRange] = {}
    for s in ir.topo_order(p):
        if isinstance(s, ir.InputStage):
            iv = Interval(Fraction(s.lo), Fraction(s.hi))
        elif isinstance(s, ir.StencilStage):
            iv = stencil_interval(s.kernel, out[s.input].interval)
        else:
            expr = ir.rewrite_squares(s.expr)
            try:
                iv = eval_expr_interval(expr, lambda r: out[r.stage].interval)
            except DivisionThroughZero:
                raise DivisionThroughZero(s.name) from None
        out[s.name] = StageRange(iv, alpha_from_range(iv.lo, iv.hi))
    return out
