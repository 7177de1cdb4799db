"""Pipeline DAG intermediate representation.

A pipeline is a DAG of named stages over a 2-D pixel grid. Stage kinds:

* input     -- carries a declared finite value range (e.g. 0..255),
* pointwise -- a scalar expression over predecessor stages at offset (0,0),
* stencil   -- a windowed weighted sum over a single predecessor.

All constants are exact rationals so that analyses are deterministic and
bit-exact (1/12 has no finite binary representation). Pipelines and
expressions are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union


class PipelineError(Exception):
    """Base class for IR validation and parse errors."""


class SchemaError(PipelineError):
    pass


class CycleError(PipelineError):
    pass


class DanglingReferenceError(PipelineError):
    pass


class KernelShapeError(PipelineError):
    pass


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class StageRef:
    stage: str
    di: int = 0
    dj: int = 0


@dataclass(frozen=True)
class Add:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Sub:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Mul:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Div:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise SchemaError("pow exponent must be a positive integer, got %r" % (self.n,))


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Abs:
    arg: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str  # "lt" | "le"
    lhs: "Expr"
    rhs: "Expr"

    def __post_init__(self):
        if self.op not in ("lt", "le"):
            raise SchemaError("unknown comparison op %r" % (self.op,))


@dataclass(frozen=True)
class Select:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


Expr = Union[Const, StageRef, Add, Sub, Mul, Div, Pow, Neg, Abs, Cmp, Select]

_BINOPS = {Add: "add", Sub: "sub", Mul: "mul", Div: "div"}


def expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Add, Sub, Mul, Div)):
        return (e.lhs, e.rhs)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (Neg, Abs)):
        return (e.arg,)
    if isinstance(e, Cmp):
        return (e.lhs, e.rhs)
    if isinstance(e, Select):
        return (e.cond, e.then, e.other)
    return ()


def expr_refs(e: Expr) -> Iterator[StageRef]:
    """All StageRef leaves, left to right."""
    if isinstance(e, StageRef):
        yield e
    for c in expr_children(e):
        yield from expr_refs(c)


def rewrite_squares(e: Expr) -> Expr:
    """Normalize products of a ref with itself into an even power.

    Applied bottom-up; Mul(r, r) with syntactically identical StageRefs
    becomes Pow(r, 2). Idempotent, and value-preserving on every input.
    The even-power range rule is tighter than the product rule for
    sign-spanning operands, so analyses rely on this normalization.
    """
    if isinstance(e, Mul):
        lhs = rewrite_squares(e.lhs)
        rhs = rewrite_squares(e.rhs)
        if isinstance(lhs, StageRef) and lhs == rhs:
            return Pow(lhs, 2)
        return Mul(lhs, rhs)
    if isinstance(e, Add):
        return Add(rewrite_squares(e.lhs), rewrite_squares(e.rhs))
    if isinstance(e, Sub):
        return Sub(rewrite_squares(e.lhs), rewrite_squares(e.rhs))
    if isinstance(e, Div):
        return Div(rewrite_squares(e.lhs), rewrite_squares(e.rhs))
    if isinstance(e, Pow):
        return Pow(rewrite_squares(e.base), e.n)
    if isinstance(e, Neg):
        return Neg(rewrite_squares(e.arg))
    if isinstance(e, Abs):
        return Abs(rewrite_squares(e.arg))
    if isinstance(e, Cmp):
        return Cmp(e.op, rewrite_squares(e.lhs), rewrite_squares(e.rhs))
    if isinstance(e, Select):
        return Select(rewrite_squares(e.cond), rewrite_squares(e.then),
                      rewrite_squares(e.other))
    return e


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InputStage:
    name: str
    lo: Fraction
    hi: Fraction


@dataclass(frozen=True)
class PointwiseStage:
    name: str
    expr: Expr


@dataclass(frozen=True)
class StencilKernel:
    """2-D coefficient window with a uniform scale.

    Equivalent expansion: out(i,j) = scale * sum coeff(a,b) * in(i+a-ar, j+b-ac)
    with anchor (ar, ac) = ((rows-1)//2, (cols-1)//2).
    """

    coeffs: tuple[tuple[Fraction, ...], ...]
    scale: Fraction

    @property
    def rows(self) -> int:
        return len(self.coeffs)

    @property
    def cols(self) -> int:
        return len(self.coeffs[0])

    @property
    def anchor(self) -> tuple[int, int]:
        return ((self.rows - 1) // 2, (self.cols - 1) // 2)


@dataclass(frozen=True)
class StencilStage:
    """Windowed weighted sum over one predecessor.

    stride 1 is the ordinary centered stencil; an integer stride p
    downsamples by p along that axis, a stride of 1/q upsamples by q
    (polyphase, taps mirrored on the left phase so each output remains a
    weighted sum with the kernel's coefficient multiset).
    """

    name: str
    input: str
    kernel: StencilKernel
    stride_r: Fraction = Fraction(1)
    stride_c: Fraction = Fraction(1)


Stage = Union[InputStage, PointwiseStage, StencilStage]


def stage_inputs(s: Stage) -> tuple[str, ...]:
    """Names of stages this stage reads, in first-use order, no duplicates."""
    if isinstance(s, InputStage):
        return ()
    if isinstance(s, StencilStage):
        return (s.input,)
    seen: list[str] = []
    for ref in expr_refs(s.expr):
        if ref.stage not in seen:
            seen.append(ref.stage)
    return tuple(seen)


@dataclass(frozen=True)
class Pipeline:
    name: str
    rows: int
    cols: int
    stages: tuple[Stage, ...]

    def __post_init__(self):
        _validate(self)

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def stage_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.stages)

    def input_stages(self) -> tuple[InputStage, ...]:
        return tuple(s for s in self.stages if isinstance(s, InputStage))


def _validate(p: Pipeline) -> None:
    if p.rows < 1 or p.cols < 1:
        raise SchemaError("pipeline %r: grid dims must be positive" % p.name)
    seen: set[str] = set()
    for s in p.stages:
        if not s.name:
            raise SchemaError("pipeline %r: empty stage name" % p.name)
        if s.name in seen:
            raise SchemaError("pipeline %r: duplicate stage name %r" % (p.name, s.name))
        for dep in stage_inputs(s):
            if dep == s.name:
                raise CycleError("stage %r references itself" % s.name)
            if dep not in seen:
                raise DanglingReferenceError(
                    "stage %r references undeclared stage %r" % (s.name, dep))
        if isinstance(s, InputStage):
            if not (_finite(s.lo) and _finite(s.hi)):
                raise SchemaError("input stage %r: range must be finite" % s.name)
            if s.lo > s.hi:
                raise SchemaError("input stage %r: empty range" % s.name)
        elif isinstance(s, PointwiseStage):
            for ref in expr_refs(s.expr):
                if ref.di != 0 or ref.dj != 0:
                    raise SchemaError(
                        "stage %r: pointwise ref to %r must use offset (0,0)"
                        % (s.name, ref.stage))
        elif isinstance(s, StencilStage):
            _validate_stencil(s)
        seen.add(s.name)


def _validate_stencil(s: StencilStage) -> None:
    k = s.kernel
    if not k.coeffs or not k.coeffs[0]:
        raise KernelShapeError("stage %r: empty kernel" % s.name)
    if any(len(row) != k.cols for row in k.coeffs):
        raise KernelShapeError("stage %r: ragged kernel rows" % s.name)
    for stride, dim, axis in ((s.stride_r, k.rows, "rows"), (s.stride_c, k.cols, "cols")):
        if stride <= 0:
            raise SchemaError("stage %r: stride must be positive" % s.name)
        if stride.numerator != 1 and stride.denominator != 1:
            raise SchemaError("stage %r: stride must be p or 1/q" % s.name)
        if stride == 1 and dim % 2 == 0:
            raise KernelShapeError(
                "stage %r: kernel %s must be odd for unit stride" % (s.name, axis))


def _finite(x: Fraction) -> bool:
    return isinstance(x, Fraction) or isinstance(x, int)


def topo_order(p: Pipeline) -> list[Stage]:
    """Stages in dependency order, ties broken by declaration order.

    Validation guarantees declarations are already topologically sorted,
    so this is Kahn's algorithm with a declaration-ordered ready set.
    """
    order: list[Stage] = []
    remaining = {s.name: set(stage_inputs(s)) for s in p.stages}
    done: set[str] = set()
    while remaining:
        ready = [s for s in p.stages if s.name in remaining and remaining[s.name] <= done]
        if not ready:
            raise CycleError("pipeline %r: cycle among %s" % (p.name, sorted(remaining)))
        for s in ready:
            order.append(s)
            done.add(s.name)
            del remaining[s.name]
    return order


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _num_to_json(x: Fraction):
    if x.denominator == 1:
        return int(x)
    return ["rat", x.numerator, x.denominator]


def _num_from_json(v, where: str) -> Fraction:
    if isinstance(v, bool):
        raise SchemaError("%s: expected number, got bool" % where)
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    if isinstance(v, float):  # only via default json loading; kept for tolerance
        return Fraction(str(v))
    if isinstance(v, list) and len(v) == 3 and v[0] == "rat":
        return Fraction(v[1], v[2])
    raise SchemaError("%s: expected number or [\"rat\",p,q], got %r" % (where, v))


def expr_to_json(e: Expr):
    if isinstance(e, Const):
        return {"op": "const", "value": _num_to_json(e.value)}
    if isinstance(e, StageRef):
        return {"op": "ref", "stage": e.stage, "di": e.di, "dj": e.dj}
    if isinstance(e, (Add, Sub, Mul, Div)):
        return {"op": _BINOPS[type(e)],
                "lhs": expr_to_json(e.lhs), "rhs": expr_to_json(e.rhs)}
    if isinstance(e, Pow):
        return {"op": "pow", "base": expr_to_json(e.base), "n": e.n}
    if isinstance(e, Neg):
        return {"op": "neg", "arg": expr_to_json(e.arg)}
    if isinstance(e, Abs):
        return {"op": "abs", "arg": expr_to_json(e.arg)}
    if isinstance(e, Cmp):
        return {"op": e.op, "lhs": expr_to_json(e.lhs), "rhs": expr_to_json(e.rhs)}
    if isinstance(e, Select):
        return {"op": "select", "cond": expr_to_json(e.cond),
                "then": expr_to_json(e.then), "else": expr_to_json(e.other)}
    raise TypeError("not an expression: %r" % (e,))


def expr_from_json(d, where: str) -> Expr:
    if not isinstance(d, dict) or "op" not in d:
        raise SchemaError("%s: expression node must be an object with 'op'" % where)
    op = d["op"]
    try:
        if op == "const":
            return Const(_num_from_json(d["value"], where))
        if op == "ref":
            stage = d["stage"]
            if not isinstance(stage, str):
                raise SchemaError("%s: ref stage must be a string" % where)
            return StageRef(stage, int(d.get("di", 0)), int(d.get("dj", 0)))
        if op in ("add", "sub", "mul", "div"):
            cls = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}[op]
            return cls(expr_from_json(d["lhs"], where + "." + op),
                       expr_from_json(d["rhs"], where + "." + op))
        if op == "pow":
            return Pow(expr_from_json(d["base"], where + ".pow"), int(d["n"]))
        if op == "neg":
            return Neg(expr_from_json(d["arg"], where + ".neg"))
        if op == "abs":
            return Abs(expr_from_json(d["arg"], where + ".abs"))
        if op in ("lt", "le"):
            return Cmp(op, expr_from_json(d["lhs"], where + "." + op),
                       expr_from_json(d["rhs"], where + "." + op))
        if op == "select":
            return Select(expr_from_json(d["cond"], where + ".select"),
                          expr_from_json(d["then"], where + ".select"),
                          expr_from_json(d["else"], where + ".select"))
    except KeyError as exc:
        raise SchemaError("%s: missing field %s for op %r" % (where, exc, op)) from None
    raise SchemaError("%s: unknown expression op %r" % (where, op))


def _stage_to_json(s: Stage):
    if isinstance(s, InputStage):
        return {"name": s.name, "kind": "input",
                "range": [_num_to_json(s.lo), _num_to_json(s.hi)]}
    if isinstance(s, PointwiseStage):
        return {"name": s.name, "kind": "pointwise", "expr": expr_to_json(s.expr)}
    d = {"name": s.name, "kind": "stencil", "input": s.input,
         "kernel": {"rows": s.kernel.rows, "cols": s.kernel.cols,
                    "coeffs": [[_num_to_json(c) for c in row] for row in s.kernel.coeffs],
                    "scale": _num_to_json(s.kernel.scale)}}
    if s.stride_r != 1 or s.stride_c != 1:
        d["stride"] = [_num_to_json(s.stride_r), _num_to_json(s.stride_c)]
    return d


def _stage_from_json(d, idx: int) -> Stage:
    where = "stages[%d]" % idx
    if not isinstance(d, dict):
        raise SchemaError("%s: stage must be an object" % where)
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("%s: missing stage name" % where)
    where = "stage %r" % name
    kind = d.get("kind")
    if kind == "input":
        rng = d.get("range")
        if not isinstance(rng, list) or len(rng) != 2:
            raise SchemaError("%s: input range must be [lo, hi]" % where)
        return InputStage(name, _num_from_json(rng[0], where), _num_from_json(rng[1], where))
    if kind == "pointwise":
        if "expr" not in d:
            raise SchemaError("%s: pointwise stage needs an expr" % where)
        return PointwiseStage(name, expr_from_json(d["expr"], where))
    if kind == "stencil":
        inp = d.get("input")
        if not isinstance(inp, str):
            raise SchemaError("%s: stencil needs an input stage name" % where)
        kd = d.get("kernel")
        if not isinstance(kd, dict) or "coeffs" not in kd:
            raise SchemaError("%s: stencil needs a kernel with coeffs" % where)
        coeffs = tuple(tuple(_num_from_json(c, where) for c in row) for row in kd["coeffs"])
        if "rows" in kd and kd["rows"] != len(coeffs):
            raise KernelShapeError("%s: kernel rows field disagrees with coeffs" % where)
        if "cols" in kd and coeffs and kd["cols"] != len(coeffs[0]):
            raise KernelShapeError("%s: kernel cols field disagrees with coeffs" % where)
        scale = _num_from_json(kd.get("scale", 1), where)
        stride = d.get("stride", [1, 1])
        if not isinstance(stride, list) or len(stride) != 2:
            raise SchemaError("%s: stride must be [row, col]" % where)
        return StencilStage(name, inp, StencilKernel(coeffs, scale),
                            _num_from_json(stride[0], where), _num_from_json(stride[1], where))
    raise SchemaError("%s: unknown stage kind %r" % (where, kind))


def pipeline_to_json(p: Pipeline) -> dict:
    return {"name": p.name, "params": {"R": p.rows, "C": p.cols},
            "stages": [_stage_to_json(s) for s in p.stages]}


def pipeline_from_json(doc) -> Pipeline:
    if not isinstance(doc, dict):
        raise SchemaError("pipeline document must be a JSON object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("pipeline needs a non-empty name")
    params = doc.get("params")
    if not isinstance(params, dict) or "R" not in params or "C" not in params:
        raise SchemaError("pipeline %r: params must carry R and C" % name)
    stages_doc = doc.get("stages")
    if not isinstance(stages_doc, list):
        raise SchemaError("pipeline %r: stages must be a list" % name)
    stages = tuple(_stage_from_json(s, i) for i, s in enumerate(stages_doc))
    return Pipeline(name, int(params["R"]), int(params["C"]), stages)


def parse_pipeline(text: str) -> Pipeline:
    """Parse and validate the canonical JSON form of a pipeline."""
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise SchemaError("malformed JSON: %s" % exc) from None
    return pipeline_from_json(doc)


def serialize_pipeline(p: Pipeline) -> str:
    return json.dumps(pipeline_to_json(p), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Evaluation helper shared by analyses and evaluators
# ---------------------------------------------------------------------------

def eval_expr(e: Expr, ref_value):
    """Evaluate an expression exactly; ref_value(StageRef) supplies leaves.

    Cmp yields a bool and is only meaningful as a Select condition.
    Raises ZeroDivisionError on exact division by zero.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, StageRef):
        return ref_value(e)
    if isinstance(e, Add):
        return eval_expr(e.lhs, ref_value) + eval_expr(e.rhs, ref_value)
    if isinstance(e, Sub):
        return eval_expr(e.lhs, ref_value) - eval_expr(e.rhs, ref_value)
    if isinstance(e, Mul):
        return eval_expr(e.lhs, ref_value) * eval_expr(e.rhs, ref_value)
    if isinstance(e, Div):
        return eval_expr(e.lhs, ref_value) / eval_expr(e.rhs, ref_value)
    if isinstance(e, Pow):
        return eval_expr(e.base, ref_value) ** e.n
    if isinstance(e, Neg):
        return -eval_expr(e.arg, ref_value)
    if isinstance(e, Abs):
        return abs(eval_expr(e.arg, ref_value))
    if isinstance(e, Cmp):
        a = eval_expr(e.lhs, ref_value)
        b = eval_expr(e.rhs, ref_value)
        return a < b if e.op == "lt" else a <= b
    if isinstance(e, Select):
        if eval_expr(e.cond, ref_value):
            return eval_expr(e.then, ref_value)
        return eval_expr(e.other, ref_value)
    raise TypeError("not an expression: %r" % (e,))


def stencil_taps(s: StencilStage) -> list[tuple[int, int, Fraction]]:
    """Kernel taps as (row offset, col offset, coefficient) around the anchor.

    Offsets are relative tap positions before stride placement; zero
    coefficients are kept so domain computation sees the full window.
    """
    ar, ac = s.kernel.anchor
    return [(a - ar, b - ac, s.kernel.coeffs[a][b])
            for a in range(s.kernel.rows) for b in range(s.kernel.cols)]


def stencil_tap_positions(s: StencilStage, i: int, j: int) -> list[tuple[int, int, Fraction]]:
    """Input pixel coordinates feeding output (i, j), with coefficients.

    Integer strides place the window at (p*i, p*j). An upsampling stride
    1/q places it at the source pixel i//q with taps mirrored on phase 0
    so both phases use the same coefficient multiset.
    """
    taps = stencil_taps(s)
    out = []
    for da, db, c in taps:
        ii = _tap_coord(s.stride_r, i, da)
        jj = _tap_coord(s.stride_c, j, db)
        out.append((ii, jj, c))
    return out


def _tap_coord(stride: Fraction, i: int, d: int) -> int:
    if stride.denominator == 1:
        return int(stride) * i + d
    q = stride.denominator
    base, phase = divmod(i, q)
    # mirror taps on the low phase; q=2 gives the classic pair
    # out(2c) = k(0)*in(c) + k(1)*in(c-1), out(2c+1) = k(0)*in(c) + k(1)*in(c+1)
    return base + d if phase * 2 >= q else base - d


def stage_dims(p: Pipeline, name_dims: dict[str, tuple[int, int]], s: Stage) -> tuple[int, int]:
    """Output grid dims for a stage given its predecessors' dims."""
    if isinstance(s, InputStage):
        return (p.rows, p.cols)
    if isinstance(s, PointwiseStage):
        dims = [name_dims[r] for r in stage_inputs(s)]
        if not dims:
            return (p.rows, p.cols)
        if any(d != dims[0] for d in dims):
            raise PipelineError("stage %r: predecessor dims disagree" % s.name)
        return dims[0]
    r, c = name_dims[s.input]
    return (_scaled_dim(r, s.stride_r), _scaled_dim(c, s.stride_c))


def _scaled_dim(n: int, stride: Fraction) -> int:
    if stride.denominator == 1:
        return -(-n // int(stride))  # ceil division
    return n * stride.denominator


def const_rat(x) -> Const:
    """Constant from an int, Fraction, or decimal string."""
    if isinstance(x, str):
        return Const(Fraction(x))
    return Const(Fraction(x))


def approx(x: Fraction) -> float:
    """Nearest float, for display only."""
    return x.numerator / x.denominator if isinstance(x, Fraction) else float(x)


def ceil_log2(n: int) -> int:
    """Exact ceil(log2(n)) for n >= 1 via integer bit length."""
    if n < 1:
        raise ValueError("ceil_log2 needs n >= 1, got %r" % (n,))
    return (n - 1).bit_length()


def floor_exact(x: Fraction) -> int:
    return math.floor(x)


def ceil_exact(x: Fraction) -> int:
    return math.ceil(x)
