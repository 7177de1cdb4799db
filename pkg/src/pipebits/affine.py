"""Affine-arithmetic range propagation.

A value is x0 + sum(x_i * eps_i) with noise symbols eps_i in [-1, 1];
sharing symbols across forms is what encodes correlation, so x - x
cancels exactly. Multiplication introduces one fresh symbol absorbing
the quadratic remainder.

The whole-pipeline analysis expands one representative output pixel's
dependency cone per stage: overlapping stencil taps that touch the same
input pixel share that pixel's symbol. Alongside each form it carries
the plain interval-rule result and reports the intersection, so affine
results are never wider than interval ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .fixedpoint import alpha_from_range
from .interval import (DivisionThroughZero, Interval, StageRange, iv_abs,
                       iv_add, iv_div, iv_mul, iv_neg, iv_pow, iv_sub,
                       stencil_interval)


class SymbolPool:
    """Fresh noise-symbol ids, confined to one analysis run.

    Every symbol id in every form of a run must be issued here;
    otherwise a fresh remainder symbol could collide with a live one.
    """

    def __init__(self):
        self._next = 0

    def fresh(self) -> int:
        i = self._next
        self._next += 1
        return i


class AffineForm:
    __slots__ = ("x0", "terms")

    def __init__(self, x0, terms: dict[int, Fraction] | None = None):
        self.x0 = Fraction(x0)
        self.terms = {i: c for i, c in (terms or {}).items() if c != 0}

    @staticmethod
    def constant(x) -> "AffineForm":
        return AffineForm(x)

    @staticmethod
    def from_interval(iv: Interval, pool: SymbolPool) -> "AffineForm":
        mid = (iv.lo + iv.hi) / 2
        rad = (iv.hi - iv.lo) / 2
        if rad == 0:
            return AffineForm(mid)
        return AffineForm(mid, {pool.fresh(): rad})

    def radius(self) -> Fraction:
        return sum((abs(c) for c in self.terms.values()), Fraction(0))

    def interval(self) -> Interval:
        r = self.radius()
        return Interval(self.x0 - r, self.x0 + r)

    def __repr__(self):
        return "AffineForm(%s, %r)" % (self.x0, self.terms)


def aa_add(a: AffineForm, b: AffineForm) -> AffineForm:
    terms = dict(a.terms)
    for i, c in b.terms.items():
        terms[i] = terms.get(i, Fraction(0)) + c
    return AffineForm(a.x0 + b.x0, terms)


def aa_neg(a: AffineForm) -> AffineForm:
    return AffineForm(-a.x0, {i: -c for i, c in a.terms.items()})


def aa_sub(a: AffineForm, b: AffineForm) -> AffineForm:
    return aa_add(a, aa_neg(b))


def aa_scale(a: AffineForm, c) -> AffineForm:
    c = Fraction(c)
    return AffineForm(a.x0 * c, {i: t * c for i, t in a.terms.items()})


def aa_add_const(a: AffineForm, c) -> AffineForm:
    return AffineForm(a.x0 + Fraction(c), dict(a.terms))


def aa_mul(a: AffineForm, b: AffineForm, pool: SymbolPool) -> AffineForm:
    """Product: linear terms x0*y_i + y0*x_i, quadratic remainder
    rad(a)*rad(b) on a fresh symbol. Constant operands stay exact."""
    if not a.terms:
        return aa_scale(b, a.x0)
    if not b.terms:
        return aa_scale(a, b.x0)
    terms: dict[int, Fraction] = {}
    for i, c in a.terms.items():
        terms[i] = b.x0 * c
    for i, c in b.terms.items():
        terms[i] = terms.get(i, Fraction(0)) + a.x0 * c
    rem = a.radius() * b.radius()
    if rem != 0:
        terms[pool.fresh()] = rem
    return AffineForm(a.x0 * b.x0, terms)


def aa_sqr(a: AffineForm, pool: SymbolPool) -> AffineForm:
    """Square with the half-remainder recentering, so a zero-centered
    form squares to a nonnegative induced interval."""
    if not a.terms:
        return AffineForm(a.x0 * a.x0)
    r = a.radius()
    half = r * r / 2
    terms = {i: 2 * a.x0 * c for i, c in a.terms.items()}
    terms[pool.fresh()] = half
    return AffineForm(a.x0 * a.x0 + half, terms)


def aa_pow(a: AffineForm, n: int, pool: SymbolPool) -> AffineForm:
    if n == 1:
        return a
    if n == 2:
        return aa_sqr(a, pool)
    if n % 2 == 0:
        return aa_sqr(aa_pow(a, n // 2, pool), pool)
    return aa_mul(aa_pow(a, n - 1, pool), a, pool)


def aa_recip(a: AffineForm, rng: Interval, pool: SymbolPool) -> AffineForm:
    """Min-range linearization of 1/x over rng; rng must exclude zero.

    The linear approximation p*x + zeta with remainder delta keeps the
    induced interval exactly [1/hi, 1/lo]."""
    if rng.lo <= 0 <= rng.hi:
        raise DivisionThroughZero()
    if rng.hi < 0:
        return aa_neg(aa_recip(aa_neg(a), iv_neg(rng), pool))
    lo, hi = rng.lo, rng.hi
    p = -1 / (hi * hi)
    g_lo = 1 / lo - p * lo
    g_hi = 2 / hi
    zeta = (g_lo + g_hi) / 2
    delta = (g_lo - g_hi) / 2
    out = aa_add_const(aa_scale(a, p), zeta)
    if delta != 0:
        out = aa_add(out, AffineForm(0, {pool.fresh(): delta}))
    return out


def aa_div(a: AffineForm, b: AffineForm, b_rng: Interval, pool: SymbolPool) -> AffineForm:
    return aa_mul(a, aa_recip(b, b_rng, pool), pool)


# ---------------------------------------------------------------------------
# Whole-pipeline analysis
# ---------------------------------------------------------------------------

@dataclass
class _Node:
    form: AffineForm
    rng: Interval  # induced interval intersected with the interval rule


def _meet(form: AffineForm, by_rule: Interval) -> Interval:
    ind = form.interval()
    lo = max(ind.lo, by_rule.lo)
    hi = min(ind.hi, by_rule.hi)
    if lo > hi:  # both enclose the true range, so they must overlap
        raise AssertionError("inconsistent enclosures %s vs %s" % (ind, by_rule))
    return Interval(lo, hi)


class _AffineRun:
    def __init__(self, p: ir.Pipeline):
        self.p = p
        self.pool = SymbolPool()
        self.memo: dict[tuple[str, int, int], _Node] = {}
        self.stages = {s.name: s for s in p.stages}
        self.exprs = {s.name: ir.rewrite_squares(s.expr)
                      for s in p.stages if isinstance(s, ir.PointwiseStage)}

    def node(self, name: str, i: int, j: int) -> _Node:
        key = (name, i, j)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        s = self.stages[name]
        if isinstance(s, ir.InputStage):
            rng = Interval(Fraction(s.lo), Fraction(s.hi))
            made = _Node(AffineForm.from_interval(rng, self.pool), rng)
        elif isinstance(s, ir.StencilStage):
            made = self._stencil(s, i, j)
        else:
            form, rng = self._expr(self.exprs[name], i, j, s.name)
            made = _Node(form, rng)
        self.memo[key] = made
        return made

    def _stencil(self, s: ir.StencilStage, i: int, j: int) -> _Node:
        form = AffineForm.constant(0)
        for ii, jj, c in ir.stencil_tap_positions(s, i, j):
            if c == 0:
                continue
            tap = self.node(s.input, ii, jj)
            form = aa_add(form, aa_scale(tap.form, c))
        form = aa_scale(form, s.kernel.scale)
        rule = stencil_interval(s.kernel, self.node(s.input, i, j).rng)
        return _Node(form, _meet(form, rule))

    def _expr(self, e: ir.Expr, i: int, j: int, stage: str):
        if isinstance(e, ir.Const):
            return AffineForm.constant(e.value), Interval.point(e.value)
        if isinstance(e, ir.StageRef):
            n = self.node(e.stage, i + e.di, j + e.dj)
            return n.form, n.rng
        if isinstance(e, (ir.Add, ir.Sub)):
            fa, ra = self._expr(e.lhs, i, j, stage)
            fb, rb = self._expr(e.rhs, i, j, stage)
            if isinstance(e, ir.Add):
                form, rule = aa_add(fa, fb), iv_add(ra, rb)
            else:
                form, rule = aa_sub(fa, fb), iv_sub(ra, rb)
            return form, _meet(form, rule)
        if isinstance(e, ir.Mul):
            fa, ra = self._expr(e.lhs, i, j, stage)
            fb, rb = self._expr(e.rhs, i, j, stage)
            form = aa_mul(fa, fb, self.pool)
            return form, _meet(form, iv_mul(ra, rb))
        if isinstance(e, ir.Div):
            fa, ra = self._expr(e.lhs, i, j, stage)
            fb, rb = self._expr(e.rhs, i, j, stage)
            try:
                form = aa_div(fa, fb, rb, self.pool)
                rule = iv_div(ra, rb)
            except DivisionThroughZero:
                raise DivisionThroughZero(stage) from None
            return form, _meet(form, rule)
        if isinstance(e, ir.Pow):
            fa, ra = self._expr(e.base, i, j, stage)
            form = aa_pow(fa, e.n, self.pool)
            return form, _meet(form, iv_pow(ra, e.n))
        if isinstance(e, ir.Neg):
            fa, ra = self._expr(e.arg, i, j, stage)
            return aa_neg(fa), iv_neg(ra)
        if isinstance(e, ir.Abs):
            fa, ra = self._expr(e.arg, i, j, stage)
            rule = iv_abs(ra)
            form = AffineForm.from_interval(rule, self.pool)
            return form, rule
        if isinstance(e, ir.Select):
            _, rt = self._expr(e.then, i, j, stage)
            _, ro = self._expr(e.other, i, j, stage)
            rule = Interval.hull(rt, ro)
            return AffineForm.from_interval(rule, self.pool), rule
        if isinstance(e, ir.Cmp):
            rule = Interval(Fraction(0), Fraction(1))
            return AffineForm.from_interval(rule, self.pool), rule
        raise TypeError("not an expression: %r" % (e,))


def analyze_affine(p: ir.Pipeline) -> dict[str, StageRange]:
    """Per-stage intervals and bitwidths from the affine expansion."""
    run = _AffineRun(p)
    out: dict[str, StageRange] = {}
    for s in ir.topo_order(p):
        n = run.node(s.name, 0, 0)
        out[s.name] = StageRange(n.rng, alpha_from_range(n.rng.lo, n.rng.hi))
    return out
