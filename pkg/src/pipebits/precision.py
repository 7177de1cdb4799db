"""Greedy fractional-bitwidth search under a quality constraint.

Strategy: binary-search the smallest uniform fractional width meeting
the target, then refine stage by stage in reverse topological order,
binary-searching each stage's width with all others held fixed.

Fixed-point quality is not strictly monotone in the fractional width,
so a binary search alone could return an unverified candidate. Every
returned width is therefore evaluated directly; if the candidate fails
verification the search falls back to a linear scan upward. The
returned assignment always satisfies the target on the calibration
samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .fixedpoint import SATURATE, TRUNCATE, FixedPointFormat
from .metrics import (METRIC_DIRECTIONS, QualityResult, aae, corner_accuracy,
                      masked_metrics, psnr)
from .profiler import eval_reference
from .simulator import TypeAssignment, simulate


class TargetUnreachable(Exception):
    def __init__(self, beta_max: int, best: QualityResult):
        self.beta_max = beta_max
        self.best = best
        super().__init__("target not met even at uniform beta=%d (best %s=%s)"
                         % (beta_max, best.metric, best.value))


@dataclass(frozen=True)
class QualityTarget:
    """Metric kind, threshold, and direction (from the metric kind)."""

    metric: str  # corners | mask | psnr | aae
    value: float  # may be math.inf for an exact-match requirement
    stage: str | None = None  # metric stage; resolved per pipeline when None
    threshold: Fraction = Fraction(0)  # corner response threshold
    peak: Fraction = Fraction(255)  # psnr peak

    @property
    def higher_is_better(self) -> bool:
        return METRIC_DIRECTIONS[self.metric]


@dataclass
class BetaAssignment:
    betas: dict[str, int]
    alphas: dict[str, int]
    target: QualityTarget
    uniform_beta: int
    quality: QualityResult
    evaluations: int


def resolve_metric_stage(p: ir.Pipeline, target: QualityTarget):
    """Stage(s) the metric reads: a name, or a (u, v) pair for flow."""
    if target.stage:
        return target.stage
    names = p.stage_names
    if target.metric == "corners":
        return "harris" if "harris" in names else names[-1]
    if target.metric == "mask":
        for s in p.stages:
            if isinstance(s, ir.PointwiseStage) and isinstance(s.expr, ir.Select):
                return s.name
        raise ValueError("no select stage found for the mask metric")
    if target.metric == "aae":
        pairs = [(u, u.replace("v_x", "v_y")) for u in reversed(names)
                 if u.startswith("v_x") and u.replace("v_x", "v_y") in names]
        if not pairs:
            raise ValueError("no flow component stages found for aae")
        return pairs[0]
    return names[-1]


def selection_mask(p: ir.Pipeline, stage: str, grids: dict):
    """Branch choices of a select stage, recomputed from one run's own
    stage values; None where any operand is undefined."""
    s = p.stage(stage)
    if not (isinstance(s, ir.PointwiseStage) and isinstance(s.expr, ir.Select)):
        raise ValueError("stage %r is not a select stage" % stage)
    cond = s.expr.cond
    refs = list(ir.expr_refs(cond))
    rows = len(grids[refs[0].stage])
    cols = len(grids[refs[0].stage][0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            vals = {}
            ok = True
            for ref in refs:
                v = grids[ref.stage][i][j]
                if v is None:
                    ok = False
                    break
                vals[ref.stage] = v
            row.append(ir.eval_expr(cond, lambda r: vals[r.stage]) if ok else None)
        out.append(row)
    return out


class QualityEvaluator:
    """Simulates candidate fractional-width plans and scores them.

    Reference outputs are computed once per sample; candidate plans are
    memoized so search re-visits are free. Quality aggregates the worst
    sample (min for higher-is-better metrics, max otherwise).
    """

    def __init__(self, p: ir.Pipeline, alphas: dict[str, int],
                 signed: dict[str, bool], samples: list, target: QualityTarget,
                 rounding: str = TRUNCATE, overflow: str = SATURATE):
        if not samples:
            raise ValueError("empty sample set")
        self.p = p
        self.alphas = alphas
        self.signed = signed
        self.samples = samples
        self.target = target
        self.rounding = rounding
        self.overflow = overflow
        self.refs = [eval_reference(p, s) for s in samples]
        self.metric_stage = resolve_metric_stage(p, target)
        self.evaluations = 0
        self._cache: dict[tuple, QualityResult] = {}

    def _assignment(self, betas: dict[str, int]) -> TypeAssignment:
        formats = {}
        for name, alpha in self.alphas.items():
            a = alpha if alpha + betas[name] >= 1 else 1
            formats[name] = FixedPointFormat(a, betas[name], self.signed[name])
        return TypeAssignment(formats, self.rounding, self.overflow)

    def as_beta_map(self, beta) -> dict[str, int]:
        if isinstance(beta, dict):
            return dict(beta)
        return {name: int(beta) for name in self.alphas}

    def quality(self, beta) -> QualityResult:
        betas = self.as_beta_map(beta)
        key = tuple(sorted(betas.items()))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t = self._assignment(betas)
        worst: QualityResult | None = None
        for sample, ref in zip(self.samples, self.refs):
            sim = simulate(self.p, t, sample)
            self.evaluations += 1
            q = self._score(ref, sim)
            if worst is None:
                worst = q
            elif self.target.higher_is_better:
                worst = q if q.value < worst.value else worst
            else:
                worst = q if q.value > worst.value else worst
        self._cache[key] = worst
        return worst

    def meets(self, beta) -> bool:
        return self.quality(beta).meets(self.target.value)

    def _score(self, ref: dict, sim) -> QualityResult:
        tgt = self.target
        if tgt.metric == "aae":
            u_name, v_name = self.metric_stage
            value = aae(ref[u_name], ref[v_name],
                        sim.decoded(u_name), sim.decoded(v_name))
            n = _defined(ref[u_name])
            return QualityResult("aae", value, n, False)
        stage = self.metric_stage
        test = sim.decoded(stage)
        if tgt.metric == "corners":
            value = corner_accuracy(ref[stage], test, tgt.threshold)
            return QualityResult("corners", value, _defined(ref[stage]), True)
        if tgt.metric == "psnr":
            value = psnr(ref[stage], test, tgt.peak)
            return QualityResult("psnr", value, _defined(ref[stage]), True)
        if tgt.metric == "mask":
            ref_sel = selection_mask(self.p, stage, ref)
            test_sel = selection_mask(self.p, stage, _decoded_all(sim))
            frac, _rms = masked_metrics(ref_sel, test_sel, ref[stage], test)
            return QualityResult("mask", frac, _defined(ref[stage]), False)
        raise ValueError("unknown metric %r" % tgt.metric)


def _defined(grid) -> int:
    return sum(1 for row in grid for v in row if v is not None)


def _decoded_all(sim) -> dict:
    return {name: sim.decoded(name) for name in sim.values}


def _verified_candidate(ev: QualityEvaluator, betas_of, candidate: int,
                        ceiling: int) -> int:
    """Direct verification plus a linear fallback scan upward, covering
    non-monotone quality; the ceiling is known to pass."""
    b = candidate
    while b < ceiling and not ev.meets(betas_of(b)):
        b += 1
    return b


def uniform_beta_search(p: ir.Pipeline, alphas: dict[str, int],
                        signed: dict[str, bool], target: QualityTarget,
                        samples: list, beta_max: int = 16,
                        rounding: str = TRUNCATE, overflow: str = SATURATE,
                        evaluator: QualityEvaluator | None = None) -> int:
    """Smallest uniform fractional width meeting the target."""
    ev = evaluator or QualityEvaluator(p, alphas, signed, samples, target,
                                       rounding, overflow)
    if ev.meets(0):
        return 0
    if not ev.meets(beta_max):
        raise TargetUnreachable(beta_max, ev.quality(beta_max))
    lo, hi = 0, beta_max  # lo fails, hi passes
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ev.meets(mid):
            hi = mid
        else:
            lo = mid
    return _verified_candidate(ev, lambda b: b, hi, beta_max)


def refine_beta(p: ir.Pipeline, alphas: dict[str, int], signed: dict[str, bool],
                beta_star: int, target: QualityTarget, samples: list,
                rounding: str = TRUNCATE, overflow: str = SATURATE,
                evaluator: QualityEvaluator | None = None) -> dict[str, int]:
    """One reverse-topological pass lowering each stage's width.

    Every stage is visited exactly once; its width is binary-searched in
    [0, beta_star] with the others held at their current values. The
    uniform width is always a feasible fallback, so the result meets the
    target by construction.
    """
    ev = evaluator or QualityEvaluator(p, alphas, signed, samples, target,
                                       rounding, overflow)
    current = {name: beta_star for name in alphas}
    if not ev.meets(current):
        raise ValueError("uniform beta=%d does not meet the target" % beta_star)
    for s in reversed(ir.topo_order(p)):
        name = s.name

        def with_beta(b: int) -> dict[str, int]:
            trial = dict(current)
            trial[name] = b
            return trial

        if ev.meets(with_beta(0)):
            current[name] = 0
            continue
        lo, hi = 0, current[name]  # lo fails, hi passes
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ev.meets(with_beta(mid)):
                hi = mid
            else:
                lo = mid
        current[name] = _verified_candidate(ev, with_beta, hi, current[name])
    assert ev.meets(current)
    return current


def search_beta(p: ir.Pipeline, ranges: dict, target: QualityTarget,
                samples: list, beta_max: int = 16, rounding: str = TRUNCATE,
                overflow: str = SATURATE) -> BetaAssignment:
    """Uniform search plus refinement, packaged with its provenance."""
    alphas = {name: r.alpha for name, r in ranges.items()}
    signed = {name: r.interval.lo < 0 for name, r in ranges.items()}
    ev = QualityEvaluator(p, alphas, signed, samples, target, rounding, overflow)
    beta_star = uniform_beta_search(p, alphas, signed, target, samples,
                                    beta_max, rounding, overflow, evaluator=ev)
    betas = refine_beta(p, alphas, signed, beta_star, target, samples,
                        rounding, overflow, evaluator=ev)
    return BetaAssignment(betas, alphas, target, beta_star,
                          ev.quality(betas), ev.evaluations)


def quality_curve(p: ir.Pipeline, ranges: dict, betas, target: QualityTarget,
                  samples: list, rounding: str = TRUNCATE,
                  overflow: str = SATURATE) -> list[tuple[int, float]]:
    """Per-width quality values for plotting or reporting."""
    alphas = {name: r.alpha for name, r in ranges.items()}
    signed = {name: r.interval.lo < 0 for name, r in ranges.items()}
    ev = QualityEvaluator(p, alphas, signed, samples, target, rounding, overflow)
    return [(b, ev.quality(b).value) for b in betas]
