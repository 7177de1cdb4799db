"""Constraint-based range analysis with solver-assisted bound search.

Interval analysis loses correlations: a pixel appearing in both the
numerator and denominator of one expression is treated as two unrelated
ranges. This module rebuilds, per point-wise stage, the exact symbolic
computation of one output pixel over a pruned dependency cone (expansion
stops at stencil stages, whose ranges come from the interval rule), then
searches sound per-stage bounds two ways:

* driving an external SMT solver over a one-query-per-process SMT-LIB 2
  protocol, bisecting a parametric bound constraint, or
* a built-in branch-and-bound optimizer over the source box, using
  outward-rounded float interval arithmetic for pruning and exact
  rational evaluation for witnesses.

Either way the returned bound is sound: it is never the unproven side.
"""

from __future__ import annotations

import heapq
import math
import re
import subprocess
from dataclasses import dataclass, field, replace
from fractions import Fraction

from . import ir
from .fixedpoint import alpha_from_range
from .interval import (DivisionThroughZero, Interval, StageRange,
                       eval_expr_interval, stencil_interval)


class SolverError(Exception):
    """External solver crashed or broke the answer protocol."""


# ---------------------------------------------------------------------------
# Dependency pruning and constraint construction
# ---------------------------------------------------------------------------

def pruned_deps(p: ir.Pipeline, stage: str) -> list[tuple[str, tuple[int, int]]]:
    """Source signals of one output pixel, stopping at stencil stages.

    Inputs depend on themselves; point-wise stages union their
    predecessors' sets; a stencil stage terminates the recursion (its
    range is estimated by the interval rule instead of being expanded,
    which keeps constraint systems small). Order is deterministic.
    """
    stages = {s.name: s for s in p.stages}
    out: list[tuple[str, tuple[int, int]]] = []
    seen: set[str] = set()

    def visit(name: str) -> None:
        if name in seen:
            return
        seen.add(name)
        s = stages[name]
        if isinstance(s, ir.PointwiseStage):
            for dep in ir.stage_inputs(s):
                visit(dep)
        else:
            out.append((name, (0, 0)))

    visit(stage)
    return out


@dataclass(frozen=True)
class SourceVar:
    name: str
    stage: str
    offset: tuple[int, int]
    lo: Fraction
    hi: Fraction


@dataclass(frozen=True)
class Definition:
    name: str
    stage: str
    offset: tuple[int, int]
    expr: ir.Expr  # StageRef leaves name other system variables


@dataclass(frozen=True)
class ConstraintSystem:
    """Range-asserted sources plus one equality per intermediate value.

    Definitions are in dependency order; the last one is the objective.
    Shared subexpressions map to a single variable, which is exactly the
    correlation capture interval analysis lacks.
    """

    sources: tuple[SourceVar, ...]
    defs: tuple[Definition, ...]

    @property
    def objective(self) -> str:
        return self.defs[-1].name

    def source_interval(self, name: str) -> Interval:
        for s in self.sources:
            if s.name == name:
                return Interval(s.lo, s.hi)
        raise KeyError(name)


def _var_name(stage: str, di: int, dj: int) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", stage)
    if di == 0 and dj == 0:
        return base
    return "%s_%s_%s" % (base, str(di).replace("-", "m"), str(dj).replace("-", "m"))


def build_constraints(p: ir.Pipeline, stage: str,
                      prior: dict[str, Interval]) -> ConstraintSystem:
    """Constraint system for one output pixel of a point-wise stage.

    `prior` must hold sound intervals for every pruned-cone source
    (interval results, or tighter ones from earlier searches). Input
    stages fall back to their declared range when absent from `prior`.
    """
    stages = {s.name: s for s in p.stages}
    target = stages[stage]
    if not isinstance(target, ir.PointwiseStage):
        raise ValueError("constraint systems are built for point-wise stages, "
                         "%r is %s" % (stage, type(target).__name__))
    sources: list[SourceVar] = []
    defs: list[Definition] = []
    memo: dict[tuple[str, int, int], str] = {}

    def visit(name: str, di: int, dj: int) -> str:
        key = (name, di, dj)
        if key in memo:
            return memo[key]
        s = stages[name]
        vname = _var_name(name, di, dj)
        memo[key] = vname
        if isinstance(s, ir.PointwiseStage):
            body = _subst(ir.rewrite_squares(s.expr), di, dj)
            defs.append(Definition(vname, name, (di, dj), body))
        else:
            if name in prior:
                iv = prior[name]
            elif isinstance(s, ir.InputStage):
                iv = Interval(Fraction(s.lo), Fraction(s.hi))
            else:
                raise KeyError("no prior range for source stage %r" % name)
            sources.append(SourceVar(vname, name, (di, dj), iv.lo, iv.hi))
        return vname

    def _subst(e: ir.Expr, di: int, dj: int) -> ir.Expr:
        if isinstance(e, ir.StageRef):
            return ir.StageRef(visit(e.stage, di + e.di, dj + e.dj), 0, 0)
        if isinstance(e, ir.Const):
            return e
        if isinstance(e, (ir.Add, ir.Sub, ir.Mul, ir.Div)):
            return type(e)(_subst(e.lhs, di, dj), _subst(e.rhs, di, dj))
        if isinstance(e, ir.Pow):
            return ir.Pow(_subst(e.base, di, dj), e.n)
        if isinstance(e, ir.Neg):
            return ir.Neg(_subst(e.arg, di, dj))
        if isinstance(e, ir.Abs):
            return ir.Abs(_subst(e.arg, di, dj))
        if isinstance(e, ir.Cmp):
            return ir.Cmp(e.op, _subst(e.lhs, di, dj), _subst(e.rhs, di, dj))
        if isinstance(e, ir.Select):
            return ir.Select(_subst(e.cond, di, dj), _subst(e.then, di, dj),
                             _subst(e.other, di, dj))
        raise TypeError("not an expression: %r" % (e,))

    visit(stage, 0, 0)
    return ConstraintSystem(tuple(sources), tuple(defs))


# ---------------------------------------------------------------------------
# SMT-LIB emission
# ---------------------------------------------------------------------------

def _smt_rat(x: Fraction) -> str:
    if x < 0:
        return "(- %s)" % _smt_rat(-x)
    if x.denominator == 1:
        return str(x.numerator)
    return "(/ %d %d)" % (x.numerator, x.denominator)


def _smt_expr(e: ir.Expr) -> str:
    if isinstance(e, ir.Const):
        return _smt_rat(e.value)
    if isinstance(e, ir.StageRef):
        return e.stage
    if isinstance(e, ir.Add):
        return "(+ %s %s)" % (_smt_expr(e.lhs), _smt_expr(e.rhs))
    if isinstance(e, ir.Sub):
        return "(- %s %s)" % (_smt_expr(e.lhs), _smt_expr(e.rhs))
    if isinstance(e, ir.Mul):
        return "(* %s %s)" % (_smt_expr(e.lhs), _smt_expr(e.rhs))
    if isinstance(e, ir.Div):
        return "(/ %s %s)" % (_smt_expr(e.lhs), _smt_expr(e.rhs))
    if isinstance(e, ir.Pow):
        base = _smt_expr(e.base)
        out = base
        for _ in range(e.n - 1):
            out = "(* %s %s)" % (out, base)
        return out
    if isinstance(e, ir.Neg):
        return "(- %s)" % _smt_expr(e.arg)
    if isinstance(e, ir.Abs):
        a = _smt_expr(e.arg)
        return "(ite (>= %s 0) %s (- %s))" % (a, a, a)
    if isinstance(e, ir.Cmp):
        op = "<" if e.op == "lt" else "<="
        return "(%s %s %s)" % (op, _smt_expr(e.lhs), _smt_expr(e.rhs))
    if isinstance(e, ir.Select):
        return "(ite %s %s %s)" % (_smt_expr(e.cond), _smt_expr(e.then),
                                   _smt_expr(e.other))
    raise TypeError("not an expression: %r" % (e,))


def emit_smtlib(cs: ConstraintSystem, side: str, bound) -> str:
    """Deterministic QF_NRA script asking whether the objective can beat
    `bound` on the given side; unsat therefore certifies the bound."""
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    bound = Fraction(bound)
    lines = ["(set-logic QF_NRA)"]
    for s in cs.sources:
        lines.append("(declare-const %s Real)" % s.name)
    for d in cs.defs:
        lines.append("(declare-const %s Real)" % d.name)
    for s in cs.sources:
        lines.append("(assert (>= %s %s))" % (s.name, _smt_rat(s.lo)))
        lines.append("(assert (<= %s %s))" % (s.name, _smt_rat(s.hi)))
    for d in cs.defs:
        lines.append("(assert (= %s %s))" % (d.name, _smt_expr(d.expr)))
    cmp_op = ">" if side == "upper" else "<"
    lines.append("(assert (%s %s %s))" % (cmp_op, cs.objective, _smt_rat(bound)))
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Exact and float-interval evaluation of a system
# ---------------------------------------------------------------------------

def _system_env(cs: ConstraintSystem):
    order = [d.name for d in cs.defs]
    exprs = {d.name: d.expr for d in cs.defs}
    return order, exprs


def eval_system_exact(cs: ConstraintSystem, point: dict[str, Fraction]) -> Fraction:
    """Objective value at one source assignment, exact arithmetic."""
    vals = dict(point)

    def leaf(ref: ir.StageRef):
        return vals[ref.stage]

    for d in cs.defs:
        vals[d.name] = ir.eval_expr(d.expr, leaf)
    return vals[cs.objective]


def eval_system_interval(cs: ConstraintSystem,
                         ranges: dict[str, Interval] | None = None) -> Interval:
    """Natural interval extension of the whole system (exact rationals)."""
    vals: dict[str, Interval] = {s.name: Interval(s.lo, s.hi) for s in cs.sources}
    if ranges:
        vals.update(ranges)

    def leaf(ref: ir.StageRef):
        return vals[ref.stage]

    for d in cs.defs:
        vals[d.name] = eval_expr_interval(d.expr, leaf)
    return vals[cs.objective]


def _probe_points(cs: ConstraintSystem) -> list[dict[str, Fraction]]:
    """Deterministic witness candidates: midpoint, both corners, and each
    variable pushed to an endpoint with the others at midpoints."""
    names = [s.name for s in cs.sources]
    los = {s.name: s.lo for s in cs.sources}
    his = {s.name: s.hi for s in cs.sources}
    mid = {n: (los[n] + his[n]) / 2 for n in names}
    pts = [dict(mid), dict(los), dict(his)]
    for n in names:
        for v in (los[n], his[n]):
            pt = dict(mid)
            pt[n] = v
            pts.append(pt)
    return pts


def _best_witness(cs: ConstraintSystem, side: str) -> Fraction | None:
    best = None
    for pt in _probe_points(cs):
        try:
            v = eval_system_exact(cs, pt)
        except ZeroDivisionError:
            continue
        if best is None or (v > best if side == "upper" else v < best):
            best = v
    return best


# ---------------------------------------------------------------------------
# Branch-and-bound backend
# ---------------------------------------------------------------------------

_INF = math.inf


def _dn(x: float) -> float:
    return math.nextafter(x, -_INF) if math.isfinite(x) else x


def _up(x: float) -> float:
    return math.nextafter(x, _INF) if math.isfinite(x) else x


def _f_add(a, b):
    return _dn(a[0] + b[0]), _up(a[1] + b[1])


def _f_sub(a, b):
    return _dn(a[0] - b[1]), _up(a[1] - b[0])


def _f_mul(a, b):
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return _dn(min(p)), _up(max(p))


def _f_div(a, b):
    if b[0] <= 0.0 <= b[1]:
        return -_INF, _INF
    return _f_mul(a, (_dn(1.0 / b[1]), _up(1.0 / b[0])))


def _f_pow(a, n):
    if n % 2 == 1:
        return _dn(a[0] ** n), _up(a[1] ** n)
    if a[0] >= 0.0:
        return _dn(a[0] ** n), _up(a[1] ** n)
    if a[1] < 0.0:
        return _dn(a[1] ** n), _up(a[0] ** n)
    return 0.0, _up(max(a[0] ** n, a[1] ** n))


def _f_neg(a):
    return -a[1], -a[0]


def _f_abs(a):
    if a[0] >= 0.0:
        return a
    if a[1] <= 0.0:
        return _f_neg(a)
    return 0.0, max(-a[0], a[1])


def _f_const(x: Fraction):
    f = x.numerator / x.denominator
    if Fraction(f) == x:
        return f, f
    return _dn(f), _up(f)


def _eval_expr_fiv(e: ir.Expr, vals: dict):
    """Float-interval evaluation with outward rounding; Select hulls the
    branches when its condition cannot be decided over the box."""
    if isinstance(e, ir.Const):
        return _f_const(e.value)
    if isinstance(e, ir.StageRef):
        return vals[e.stage]
    if isinstance(e, ir.Add):
        return _f_add(_eval_expr_fiv(e.lhs, vals), _eval_expr_fiv(e.rhs, vals))
    if isinstance(e, ir.Sub):
        return _f_sub(_eval_expr_fiv(e.lhs, vals), _eval_expr_fiv(e.rhs, vals))
    if isinstance(e, ir.Mul):
        return _f_mul(_eval_expr_fiv(e.lhs, vals), _eval_expr_fiv(e.rhs, vals))
    if isinstance(e, ir.Div):
        return _f_div(_eval_expr_fiv(e.lhs, vals), _eval_expr_fiv(e.rhs, vals))
    if isinstance(e, ir.Pow):
        return _f_pow(_eval_expr_fiv(e.base, vals), e.n)
    if isinstance(e, ir.Neg):
        return _f_neg(_eval_expr_fiv(e.arg, vals))
    if isinstance(e, ir.Abs):
        return _f_abs(_eval_expr_fiv(e.arg, vals))
    if isinstance(e, ir.Cmp):
        a = _eval_expr_fiv(e.lhs, vals)
        b = _eval_expr_fiv(e.rhs, vals)
        if (a[1] < b[0]) if e.op == "lt" else (a[1] <= b[0]):
            return 1.0, 1.0
        if (a[0] >= b[1]) if e.op == "lt" else (a[0] > b[1]):
            return 0.0, 0.0
        return 0.0, 1.0
    if isinstance(e, ir.Select):
        c = _eval_expr_fiv(e.cond, vals)
        if c[0] >= 1.0:
            return _eval_expr_fiv(e.then, vals)
        if c[1] <= 0.0:
            return _eval_expr_fiv(e.other, vals)
        t = _eval_expr_fiv(e.then, vals)
        o = _eval_expr_fiv(e.other, vals)
        return min(t[0], o[0]), max(t[1], o[1])
    raise TypeError("not an expression: %r" % (e,))


def _system_fiv(cs: ConstraintSystem, box: dict):
    vals = dict(box)
    for d in cs.defs:
        vals[d.name] = _eval_expr_fiv(d.expr, vals)
    return vals


def _has_select(cs: ConstraintSystem) -> bool:
    def walk(e: ir.Expr) -> bool:
        if isinstance(e, (ir.Select, ir.Abs)):
            return True
        return any(walk(c) for c in ir.expr_children(e))

    return any(walk(d.expr) for d in cs.defs)


def _grad_intervals(cs: ConstraintSystem, vals: dict) -> dict[str, tuple]:
    """Reverse-mode interval derivatives of the objective per source.

    Used for the monotonicity test: when the derivative has constant
    sign over a box, the maximum sits on the corresponding face. Only
    called for systems without Select/Abs nodes.
    """
    src_adj: dict[str, tuple] = {}
    def_names = {d.name for d in cs.defs}
    def_adj: dict[str, tuple] = {cs.defs[-1].name: (1.0, 1.0)}

    def leaf_adj(e: ir.StageRef, gg):
        target = def_adj if e.stage in def_names else src_adj
        cur = target.get(e.stage)
        target[e.stage] = _f_add(cur, gg) if cur is not None else gg

    for d in reversed(cs.defs):
        g = def_adj.get(d.name)
        if g is None:
            continue
        _back_expr(d.expr, g, vals, leaf_adj)
    return src_adj


def _back_expr(e: ir.Expr, g, env: dict, leaf_adj) -> None:
    if isinstance(e, ir.StageRef):
        leaf_adj(e, g)
        return
    if isinstance(e, ir.Const):
        return
    if isinstance(e, ir.Add):
        _back_expr(e.lhs, g, env, leaf_adj)
        _back_expr(e.rhs, g, env, leaf_adj)
    elif isinstance(e, ir.Sub):
        _back_expr(e.lhs, g, env, leaf_adj)
        _back_expr(e.rhs, _f_neg(g), env, leaf_adj)
    elif isinstance(e, ir.Mul):
        va = _eval_expr_fiv(e.lhs, env)
        vb = _eval_expr_fiv(e.rhs, env)
        _back_expr(e.lhs, _f_mul(g, vb), env, leaf_adj)
        _back_expr(e.rhs, _f_mul(g, va), env, leaf_adj)
    elif isinstance(e, ir.Div):
        va = _eval_expr_fiv(e.lhs, env)
        vb = _eval_expr_fiv(e.rhs, env)
        _back_expr(e.lhs, _f_div(g, vb), env, leaf_adj)
        _back_expr(e.rhs, _f_neg(_f_div(_f_mul(g, va), _f_mul(vb, vb))), env, leaf_adj)
    elif isinstance(e, ir.Pow):
        vb = _eval_expr_fiv(e.base, env)
        _back_expr(e.base, _f_mul(g, _f_mul((float(e.n), float(e.n)),
                                            _f_pow(vb, e.n - 1))), env, leaf_adj)
    elif isinstance(e, ir.Neg):
        _back_expr(e.arg, _f_neg(g), env, leaf_adj)
    else:
        raise AssertionError("gradient on unsupported node %r" % (e,))


@dataclass
class BnbResult:
    bound: Fraction
    witness: Fraction | None
    boxes: int
    converged: bool


def _mag(g) -> float:
    return max(abs(g[0]), abs(g[1]))


def _bnb_max(cs: ConstraintSystem, eps: Fraction, bits_stable: bool,
             max_boxes: int) -> BnbResult:
    """Best-first branch-and-bound maximization of the objective.

    Each box is bounded by the tighter of the natural interval extension
    and a mean-value form built from interval gradients; gradients also
    pin monotone dimensions to their favorable face and pick the split
    dimension by width-times-slope impact. The global sound bound is
    max(heap top, sliver residue, best witness), so no discarded box can
    hide mass above the returned value. Witnesses are always confirmed
    in exact arithmetic; floats only screen candidates.
    """
    names = [s.name for s in cs.sources]
    widths0 = {s.name: float(s.hi - s.lo) or 1.0 for s in cs.sources}
    src_iv = {s.name: (Fraction(s.lo), Fraction(s.hi)) for s in cs.sources}
    can_grad = not _has_select(cs)

    incumbent = _best_witness(cs, "upper")
    state = {"inc": incumbent}

    def try_witness(mid: dict, screen_hi: float) -> None:
        inc = state["inc"]
        if inc is not None and screen_hi <= inc:
            return
        # clamp into the exact ranges: root boxes are rounded outward
        pt = {n: min(max(Fraction(v), src_iv[n][0]), src_iv[n][1])
              for n, v in mid.items()}
        try:
            w = eval_system_exact(cs, pt)
        except ZeroDivisionError:
            return
        if inc is None or w > inc:
            state["inc"] = w

    def assess(box: dict):
        """Pin monotone dims, bound the box, and try its midpoint.

        Returns (upper, box) with upper possibly from the mean-value
        form around the midpoint; None when the box cannot beat the
        incumbent.
        """
        vals = _system_fiv(cs, box)
        upper = vals[cs.objective][1]
        grads = None
        if can_grad:
            grads = _grad_intervals(cs, vals)
            pinned = {}
            changed = False
            for n in names:
                lo, hi = box[n]
                g = grads.get(n)
                if lo != hi and g is not None:
                    if g[0] >= 0.0:
                        pinned[n] = (hi, hi)
                        changed = True
                        continue
                    if g[1] <= 0.0:
                        pinned[n] = (lo, lo)
                        changed = True
                        continue
                elif lo != hi and g is None:
                    pinned[n] = (lo, lo)
                    changed = True
                    continue
                pinned[n] = (lo, hi)
            if changed:
                box = pinned
                upper = _system_fiv(cs, box)[cs.objective][1]
        mid = {n: box[n][0] + (box[n][1] - box[n][0]) / 2.0 for n in names}
        pbox = {n: (m, m) for n, m in mid.items()}
        pval = _system_fiv(cs, pbox)[cs.objective]
        if grads is not None and math.isfinite(pval[1]):
            spread = pval[1]
            for n in names:
                g = grads.get(n)
                if g is None:
                    continue
                half = (box[n][1] - box[n][0]) / 2.0
                if half > 0.0:
                    spread = _up(spread + _up(_mag(g) * half))
            upper = min(upper, spread)
        try_witness(mid, pval[1])
        inc = state["inc"]
        if inc is not None and upper <= inc:
            return None
        return upper, box, grads

    def split_dim(box: dict, grads) -> str:
        if grads:
            def impact(n):
                g = grads.get(n)
                w = box[n][1] - box[n][0]
                if g is None or w == 0.0:
                    return 0.0
                m = _mag(g)
                return w if not math.isfinite(m) else w * m
            best = max(names, key=impact)
            if impact(best) > 0.0:
                return best
        return max(names, key=lambda n: (box[n][1] - box[n][0]) / widths0[n])

    def stable(bound: Fraction) -> bool:
        inc = state["inc"]
        if inc is None:
            return False
        if bound - inc < eps:
            return True
        return bits_stable and _side_bits(bound, "upper") == _side_bits(inc, "upper")

    root = {s.name: (_dn(float(s.lo)), _up(float(s.hi))) for s in cs.sources}
    heap: list = []
    resid = -_INF  # max upper over boxes too thin to split further
    counter = 0
    first = assess(root)
    if first is not None:
        heap.append((-first[0], counter, first[1], first[2]))
    boxes = 0

    def global_bound() -> Fraction | None:
        # None stands for "still unbounded above" (a box straddles a pole)
        top = max(-heap[0][0] if heap else -_INF, resid)
        inc = state["inc"]
        if top == _INF:
            return None
        if top == -_INF:
            return inc
        top_f = Fraction(top)
        if inc is not None and inc > top_f:
            return inc
        return top_f

    while heap:
        inc = state["inc"]
        if inc is not None and -heap[0][0] <= inc and resid <= inc:
            break
        bound = global_bound()
        if bound is not None and stable(bound):
            break
        if boxes >= max_boxes:
            break
        negu, _, box, grads = heapq.heappop(heap)
        if inc is not None and -negu <= inc:
            continue
        boxes += 1
        name = split_dim(box, grads)
        lo, hi = box[name]
        m = lo + (hi - lo) / 2.0
        if not (lo < m < hi):
            resid = max(resid, _system_fiv(cs, box)[cs.objective][1])
            continue
        for sub in ((lo, m), (m, hi)):
            child = dict(box)
            child[name] = sub
            got = assess(child)
            if got is None:
                continue
            counter += 1
            heapq.heappush(heap, (-got[0], counter, got[1], got[2]))

    bound = global_bound()
    if bound is None:
        raise DivisionThroughZero()
    return BnbResult(bound, state["inc"], boxes, stable(bound) or not heap)


def _negate_system(cs: ConstraintSystem) -> ConstraintSystem:
    last = cs.defs[-1]
    neg = Definition(last.name + "_neg", last.stage, last.offset,
                     ir.Neg(ir.StageRef(last.name, 0, 0)))
    return ConstraintSystem(cs.sources, cs.defs + (neg,))


def bnb_bound(cs: ConstraintSystem, side: str, eps=Fraction(1, 16), *,
              max_boxes: int = 400_000, bits_stable: bool = False) -> Fraction:
    """Sound objective bound by box subdivision.

    Bisects the widest source dimension, prunes boxes whose interval
    evaluation cannot beat the incumbent witness, and stops once the gap
    between the sound bound and the best exact witness is below eps (or
    earlier, when `bits_stable` is set and both agree on bitwidth). The
    sound side is returned even when the box budget runs out first.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    nat = eval_system_interval(cs)  # exact; absorbs float rounding slack
    if side == "upper":
        return min(_bnb_max(cs, eps, bits_stable, max_boxes).bound, nat.hi)
    if side == "lower":
        res = _bnb_max(_negate_system(cs), eps, bits_stable, max_boxes)
        return max(-res.bound, nat.lo)
    raise ValueError("side must be 'upper' or 'lower'")


# ---------------------------------------------------------------------------
# Solver-driven binary search
# ---------------------------------------------------------------------------

class ExternalSolver:
    """One child process per query: SMT-LIB on stdin, first stdout token
    must be sat/unsat/unknown. Timeouts count as unknown."""

    def __init__(self, cmd: list[str]):
        if not cmd:
            raise ValueError("empty solver command")
        self.cmd = list(cmd)

    def decide(self, script: str, timeout: float | None) -> str:
        try:
            proc = subprocess.run(self.cmd, input=script, capture_output=True,
                                  text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return "unknown"
        except OSError as exc:
            raise SolverError("cannot run %r: %s" % (self.cmd, exc)) from None
        if proc.returncode != 0:
            raise SolverError("solver exited with %d: %s"
                              % (proc.returncode, proc.stderr.strip()[:200]))
        tokens = proc.stdout.split()
        if not tokens or tokens[0] not in ("sat", "unsat", "unknown"):
            raise SolverError("unrecognized solver output %r" % proc.stdout[:80])
        return tokens[0]


@dataclass(frozen=True)
class BoundSearchConfig:
    """Knobs for the per-stage bound search.

    The stop rule is bitwidth-stable (tightening further cannot change
    the derived integral width) with `epsilon` as a hard floor on
    bracket width; `timeout` applies per solver query.
    """

    epsilon: Fraction = Fraction(1, 16)
    timeout: float = 30.0
    solver_cmd: tuple[str, ...] | None = None
    bits_stable_stop: bool = True
    max_boxes: int = 400_000
    on_solver_error: str = "bnb"  # bnb | interval | raise


def _side_bits(v: Fraction, side: str) -> int:
    """Endpoint contribution to the integral width, signed so the value
    is monotone along each search direction."""
    v = Fraction(v)
    if v == 0:
        return 0
    if side == "upper":
        return ir.ceil_log2(math.floor(v) + 1) if v > 0 else -ir.ceil_log2(math.ceil(-v))
    return ir.ceil_log2(math.ceil(-v)) if v < 0 else -ir.ceil_log2(math.floor(v) + 1)


def search_bound(cs: ConstraintSystem, side: str, cfg: BoundSearchConfig,
                 backend: ExternalSolver) -> Fraction:
    """Bisection on a parametric bound constraint, one solver query per
    step. Returns the proven side; an unknown answer stops tightening
    but never replaces the proven bound with the candidate."""
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    sound = eval_system_interval(cs)
    sound_v = sound.hi if side == "upper" else sound.lo
    wit = _best_witness(cs, side)
    if wit is None:
        return sound_v
    if wit == sound_v:
        return sound_v
    lo, hi = (wit, sound_v) if side == "upper" else (sound_v, wit)

    def stable() -> bool:
        if hi - lo < cfg.epsilon:
            return True
        if cfg.bits_stable_stop and _side_bits(lo if side == "upper" else hi, side) \
                == _side_bits(hi if side == "upper" else lo, side):
            return True
        return False

    while not stable():
        mid = lo + (hi - lo) / 2
        answer = backend.decide(emit_smtlib(cs, side, mid), cfg.timeout)
        if answer == "unsat":
            if side == "upper":
                hi = mid
            else:
                lo = mid
        else:  # sat and unknown both mean: cannot certify this candidate
            if answer == "unknown":
                break
            if side == "upper":
                lo = mid
            else:
                hi = mid
    return hi if side == "upper" else lo


# ---------------------------------------------------------------------------
# Whole-pipeline analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmtStageResult:
    interval: Interval
    alpha: int
    method: str
    fallback: bool = False


def analyze_smt(p: ir.Pipeline,
                cfg: BoundSearchConfig = BoundSearchConfig()) -> dict[str, SmtStageResult]:
    """Per-stage ranges: declared for inputs, the interval rule for
    stencils, and a two-sided bound search for point-wise stages."""
    backend = ExternalSolver(list(cfg.solver_cmd)) if cfg.solver_cmd else None
    out: dict[str, SmtStageResult] = {}
    prior: dict[str, Interval] = {}
    for s in ir.topo_order(p):
        if isinstance(s, ir.InputStage):
            iv = Interval(Fraction(s.lo), Fraction(s.hi))
            res = SmtStageResult(iv, alpha_from_range(iv.lo, iv.hi), "declared")
        elif isinstance(s, ir.StencilStage):
            iv = stencil_interval(s.kernel, prior[s.input])
            res = SmtStageResult(iv, alpha_from_range(iv.lo, iv.hi), "interval-rule")
        else:
            res = _search_stage(p, s, prior, cfg, backend)
        out[s.name] = res
        prior[s.name] = res.interval
    return out


def _search_stage(p: ir.Pipeline, s: ir.PointwiseStage, prior, cfg, backend):
    try:
        cs = build_constraints(p, s.name, prior)
        nat = eval_system_interval(cs)  # exact; clips float rounding slack
    except DivisionThroughZero:
        raise DivisionThroughZero(s.name) from None

    def via_bnb():
        hi = bnb_bound(cs, "upper", cfg.epsilon, max_boxes=cfg.max_boxes,
                       bits_stable=cfg.bits_stable_stop)
        lo = bnb_bound(cs, "lower", cfg.epsilon, max_boxes=cfg.max_boxes,
                       bits_stable=cfg.bits_stable_stop)
        return lo, hi

    fallback = False
    try:
        if backend is not None:
            hi = search_bound(cs, "upper", cfg, backend)
            lo = search_bound(cs, "lower", cfg, backend)
            method = "smt"
        else:
            lo, hi = via_bnb()
            method = "bnb"
    except DivisionThroughZero:
        raise DivisionThroughZero(s.name) from None
    except SolverError:
        if cfg.on_solver_error == "raise":
            raise
        fallback = True
        if cfg.on_solver_error == "bnb":
            lo, hi = via_bnb()
            method = "bnb"
        else:
            lo, hi = nat.lo, nat.hi
            method = "interval-rule"
    iv = Interval(max(lo, nat.lo), min(hi, nat.hi))
    return SmtStageResult(iv, alpha_from_range(iv.lo, iv.hi), method, fallback)


def as_stage_ranges(res: dict[str, SmtStageResult]) -> dict[str, StageRange]:
    return {k: StageRange(v.interval, v.alpha) for k, v in res.items()}
