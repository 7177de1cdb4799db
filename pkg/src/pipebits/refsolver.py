"""Reference decision procedure for the emitted SMT-LIB 2 scripts.

Run as ``python -m pipebits.refsolver``: reads one script on standard
input and prints sat / unsat / unknown as the first output token, the
same child-process contract any external solver must follow.

Scope is the dialect this package emits: Real constants, range
assertions on source variables, acyclic equality definitions, and one
strict comparison on the objective. Satisfiability is decided by
branch-and-prune over the source box with exact rational interval
arithmetic; witnesses are confirmed by exact evaluation, so a "sat" or
"unsat" answer is definitive and "unknown" only means the box budget
ran out.
"""

from __future__ import annotations

import argparse
import heapq
import sys
from fractions import Fraction

from .interval import (DivisionThroughZero, Interval, iv_add, iv_div, iv_mul,
                       iv_neg, iv_sub)


def tokenize(text: str) -> list[str]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in "()":
            out.append(c)
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexprs(tokens: list[str]):
    pos = 0

    def walk():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while tokens[pos] != ")":
                items.append(walk())
            pos += 1
            return items
        return tok

    exprs = []
    while pos < len(tokens):
        exprs.append(walk())
    return exprs


class ScriptError(Exception):
    pass


def _literal(node) -> Fraction | None:
    if isinstance(node, str):
        try:
            return Fraction(node)
        except ValueError:
            return None
    if isinstance(node, list) and node:
        if node[0] == "-" and len(node) == 2:
            v = _literal(node[1])
            return -v if v is not None else None
        if node[0] == "/" and len(node) == 3:
            p, q = _literal(node[1]), _literal(node[2])
            if p is not None and q is not None and q != 0:
                return p / q
    return None


class Problem:
    def __init__(self):
        self.variables: list[str] = []
        self.ranges: dict[str, list] = {}
        self.defs: list[tuple[str, object]] = []
        self.defined: set[str] = set()
        self.goal = None  # (op, var, bound)

    @property
    def sources(self) -> list[str]:
        return [v for v in self.variables
                if v not in self.defined and v in self.ranges]


def load_problem(script: str) -> Problem:
    prob = Problem()
    for form in parse_sexprs(tokenize(script)):
        if not isinstance(form, list) or not form:
            raise ScriptError("stray token %r" % (form,))
        head = form[0]
        if head in ("set-logic", "set-option", "set-info", "check-sat", "exit"):
            continue
        if head == "declare-const":
            if len(form) != 3 or form[2] != "Real":
                raise ScriptError("only Real constants are supported")
            prob.variables.append(form[1])
            continue
        if head != "assert":
            raise ScriptError("unsupported command %r" % head)
        body = form[1]
        if not isinstance(body, list) or len(body) != 3:
            raise ScriptError("unsupported assertion %r" % (body,))
        op, lhs, rhs = body
        lit = _literal(rhs)
        if op in (">=", "<=") and isinstance(lhs, str) and lit is not None:
            rng = prob.ranges.setdefault(lhs, [None, None])
            if op == ">=":
                rng[0] = lit if rng[0] is None else max(rng[0], lit)
            else:
                rng[1] = lit if rng[1] is None else min(rng[1], lit)
            continue
        if op == "=" and isinstance(lhs, str):
            prob.defs.append((lhs, rhs))
            prob.defined.add(lhs)
            continue
        if op in (">", "<") and isinstance(lhs, str) and lit is not None:
            if prob.goal is not None:
                raise ScriptError("multiple goal constraints")
            prob.goal = (op, lhs, lit)
            continue
        raise ScriptError("unsupported assertion %r" % (body,))
    if prob.goal is None:
        raise ScriptError("no goal constraint found")
    for v in prob.sources:
        lo, hi = prob.ranges[v]
        if lo is None or hi is None:
            raise ScriptError("source %r is not fully bounded" % v)
    return prob


def _eval_exact(node, env: dict):
    lit = _literal(node)
    if lit is not None:
        return lit
    if isinstance(node, str):
        return env[node]
    head = node[0]
    args = node[1:]
    if head == "+":
        return sum((_eval_exact(a, env) for a in args), Fraction(0))
    if head == "-":
        if len(args) == 1:
            return -_eval_exact(args[0], env)
        return _eval_exact(args[0], env) - _eval_exact(args[1], env)
    if head == "*":
        out = Fraction(1)
        for a in args:
            out *= _eval_exact(a, env)
        return out
    if head == "/":
        return _eval_exact(args[0], env) / _eval_exact(args[1], env)
    if head == "ite":
        return _eval_exact(args[1], env) if _eval_bool(args[0], env) \
            else _eval_exact(args[2], env)
    raise ScriptError("unsupported operator %r" % head)


def _eval_bool(node, env: dict) -> bool:
    op, lhs, rhs = node
    a, b = _eval_exact(lhs, env), _eval_exact(rhs, env)
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def _eval_iv(node, env: dict) -> Interval:
    lit = _literal(node)
    if lit is not None:
        return Interval(lit, lit)
    if isinstance(node, str):
        return env[node]
    head = node[0]
    args = node[1:]
    if head == "+":
        out = Interval(Fraction(0), Fraction(0))
        for a in args:
            out = iv_add(out, _eval_iv(a, env))
        return out
    if head == "-":
        if len(args) == 1:
            return iv_neg(_eval_iv(args[0], env))
        return iv_sub(_eval_iv(args[0], env), _eval_iv(args[1], env))
    if head == "*":
        out = Interval(Fraction(1), Fraction(1))
        for a in args:
            out = iv_mul(out, _eval_iv(a, env))
        return out
    if head == "/":
        return iv_div(_eval_iv(args[0], env), _eval_iv(args[1], env))
    if head == "ite":
        state = _iv_cond(args[0], env)
        if state is True:
            return _eval_iv(args[1], env)
        if state is False:
            return _eval_iv(args[2], env)
        return Interval.hull(_eval_iv(args[1], env), _eval_iv(args[2], env))
    raise ScriptError("unsupported operator %r" % head)


def _iv_cond(node, env: dict):
    op, lhs, rhs = node
    a, b = _eval_iv(lhs, env), _eval_iv(rhs, env)
    if op in ("<", "<="):
        if (a.hi < b.lo) if op == "<" else (a.hi <= b.lo):
            return True
        if (a.lo >= b.hi) if op == "<" else (a.lo > b.hi):
            return False
        return None
    if op in (">", ">="):
        return _iv_cond(("<" if op == ">" else "<=", rhs, lhs), env)
    raise ScriptError("unsupported condition %r" % op)


def _has_ite(node) -> bool:
    if isinstance(node, list):
        if node and node[0] == "ite":
            return True
        return any(_has_ite(c) for c in node)
    return False


def _grad_defs(prob: Problem, env: dict, goal_var: str) -> dict[str, Interval] | None:
    """Reverse-mode interval derivatives of the goal per source variable;
    None when any definition is non-smooth (ite) or hits a pole."""
    src_adj: dict[str, Interval] = {}
    def_names = {name for name, _ in prob.defs}
    def_adj: dict[str, Interval] = {goal_var: Interval(Fraction(1), Fraction(1))}

    def bump(var: str, g: Interval) -> None:
        table = def_adj if var in def_names else src_adj
        cur = table.get(var)
        table[var] = iv_add(cur, g) if cur is not None else g

    def back(node, g: Interval) -> None:
        if isinstance(node, str) and _literal(node) is None:
            bump(node, g)
            return
        if not isinstance(node, list) or _literal(node) is not None:
            return
        head, args = node[0], node[1:]
        if head == "+":
            for a in args:
                back(a, g)
        elif head == "-":
            back(args[0], g)
            if len(args) == 2:
                back(args[1], iv_neg(g))
        elif head == "*":
            vals = [_eval_iv(a, env) for a in args]
            for i, a in enumerate(args):
                part = g
                for j, v in enumerate(vals):
                    if j != i:
                        part = iv_mul(part, v)
                back(a, part)
        elif head == "/":
            va = _eval_iv(args[0], env)
            vb = _eval_iv(args[1], env)
            back(args[0], iv_div(g, vb))
            back(args[1], iv_neg(iv_div(iv_mul(g, va), iv_mul(vb, vb))))
        else:
            raise ScriptError("no gradient for %r" % head)

    try:
        for name, body in reversed(prob.defs):
            g = def_adj.get(name)
            if g is None:
                continue
            back(body, g)
    except (DivisionThroughZero, ZeroDivisionError):
        return None
    return src_adj


def decide(script: str, max_boxes: int = 100_000) -> str:
    """sat / unsat / unknown for one emitted script."""
    prob = load_problem(script)
    op, goal_var, bound = prob.goal
    sources = prob.sources
    sign = 1 if op == ">" else -1  # normalize to: does max(sign*obj) exceed sign*bound
    smooth = not any(_has_ite(body) for _, body in prob.defs)

    def objective_exact(pt: dict) -> Fraction:
        env = dict(pt)
        for name, body in prob.defs:
            env[name] = _eval_exact(body, env)
        return env[goal_var] * sign

    def env_of(box: dict) -> dict:
        env = dict(box)
        for name, body in prob.defs:
            env[name] = _eval_iv(body, env)
        return env

    target = bound * sign
    root = {v: Interval(prob.ranges[v][0], prob.ranges[v][1]) for v in sources}
    if not sources:
        return "sat" if objective_exact({}) > target else "unsat"

    def climb(start: dict) -> Fraction | None:
        """Coordinate ascent with shrinking steps, clamped to the root box."""
        pt = dict(start)
        try:
            best = objective_exact(pt)
        except ZeroDivisionError:
            return None
        for shrink in range(1, 11):
            for v in sources:
                step = root[v].width / (2 ** shrink)
                if step == 0:
                    continue
                for cand in (pt[v] + step, pt[v] - step):
                    cand = min(max(cand, root[v].lo), root[v].hi)
                    trial = dict(pt)
                    trial[v] = cand
                    try:
                        val = objective_exact(trial)
                    except ZeroDivisionError:
                        continue
                    if val > best:
                        best = val
                        pt = trial
        return best

    def probe_points(box: dict):
        yield {v: (box[v].lo + box[v].hi) / 2 for v in sources}
        yield {v: box[v].lo for v in sources}
        yield {v: box[v].hi for v in sources}
        for v in sources:
            for end in (box[v].lo, box[v].hi):
                pt = {u: (box[u].lo + box[u].hi) / 2 for u in sources}
                pt[v] = end
                yield pt

    # a good witness often settles the query without any subdivision
    for pt in probe_points(root):
        got = climb(pt)
        if got is not None and got > target:
            return "sat"

    width0 = {v: root[v].width if root[v].width else Fraction(1) for v in sources}

    def assess(box: dict):
        """(upper, pinned box, grads, witnessed) or None if certified;
        `witnessed` flags an exact midpoint value beating the target."""
        witnessed = False
        try:
            env = env_of(box)
        except (DivisionThroughZero, ZeroDivisionError):
            return Fraction(10) ** 120, box, None, False  # pole: must split
        goal = env[goal_var]
        upper = goal.hi if sign == 1 else -goal.lo
        grads = _grad_defs(prob, env, goal_var) if smooth else None
        if grads is not None:
            pinned = {}
            changed = False
            for v in sources:
                iv = box[v]
                g = grads.get(v)
                gs = g if sign == 1 else iv_neg(g) if g is not None else None
                if iv.width != 0:
                    if gs is None:
                        pinned[v] = Interval(iv.lo, iv.lo)
                        changed = True
                        continue
                    if gs.lo >= 0:
                        pinned[v] = Interval(iv.hi, iv.hi)
                        changed = True
                        continue
                    if gs.hi <= 0:
                        pinned[v] = Interval(iv.lo, iv.lo)
                        changed = True
                        continue
                pinned[v] = iv
            if changed:
                box = pinned
                try:
                    env = env_of(box)
                    goal = env[goal_var]
                    upper = min(upper, goal.hi if sign == 1 else -goal.lo)
                except (DivisionThroughZero, ZeroDivisionError):
                    pass
        mid = {v: box[v].lo + box[v].width / 2 for v in sources}
        try:
            center = objective_exact(mid)
            witnessed = center > target
            if grads is not None:
                spread = center
                for v in sources:
                    g = grads.get(v)
                    if g is None:
                        continue
                    mag = max(abs(g.lo), abs(g.hi))
                    spread += mag * (box[v].width / 2)
                upper = min(upper, spread)
        except ZeroDivisionError:
            pass
        if witnessed:
            return upper, box, grads, True
        if upper <= target:
            return None
        return upper, box, grads, False

    def split_of(box: dict, grads) -> str | None:
        if grads:
            def impact(v):
                g = grads.get(v)
                if g is None or box[v].width == 0:
                    return Fraction(0)
                return box[v].width * max(abs(g.lo), abs(g.hi))
            best = max(sources, key=impact)
            if impact(best) > 0:
                return best
        widest = max(sources, key=lambda v: box[v].width / width0[v])
        return widest if box[widest].width > 0 else None

    def split_point(iv: Interval) -> Fraction:
        # a simple rational near the middle keeps later arithmetic small
        mid = iv.lo + iv.width / 2
        simple = mid.limit_denominator(1 << 24)
        return simple if iv.lo < simple < iv.hi else mid

    counter = 0
    first = assess(root)
    if first is None:
        return "unsat"
    if first[3]:
        return "sat"
    heap = [(-first[0], counter, first[1], first[2])]
    boxes = 0
    while heap:
        if boxes >= max_boxes:
            return "unknown"
        neg_u, _, box, grads = heapq.heappop(heap)
        boxes += 1
        if -neg_u <= target:
            continue
        dim = split_of(box, grads)
        if dim is None:
            # a degenerate box that still straddles the bound is noise
            # around an exact point; exact midpoint probing already failed
            continue
        mid = split_point(box[dim])
        for part in (Interval(box[dim].lo, mid), Interval(mid, box[dim].hi)):
            child = dict(box)
            child[dim] = part
            got = assess(child)
            if got is None:
                continue
            if got[3]:
                return "sat"
            counter += 1
            heapq.heappush(heap, (-got[0], counter, got[1], got[2]))
    return "unsat"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pipebits.refsolver", description=__doc__)
    ap.add_argument("--max-boxes", type=int, default=100_000)
    args = ap.parse_args(argv)
    script = sys.stdin.read()
    try:
        print(decide(script, args.max_boxes))
    except (ScriptError, RecursionError) as exc:
        print("unknown")
        print("; %s" % exc, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
