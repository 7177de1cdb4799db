"""Built-in pipelines: harris corners, unsharp mask, down/up sampling,
and iterative optical flow.

Constructors are pure and deterministic; every coefficient is an exact
rational. Gradient stencils use the 1/12-scaled 3x3 derivative kernels,
the flow smoothness constant is 2 (so its square, 4, appears in the
denominator), and the corner response weighs the squared trace by 1/25.
"""

from __future__ import annotations

from fractions import Fraction

from .ir import (Abs, Add, Cmp, Const, Div, InputStage, Mul, Neg, Pipeline,
                 PointwiseStage, Pow, Select, StageRef, StencilKernel,
                 StencilStage, Sub)

F = Fraction

SOBEL_X = ((F(-1), F(0), F(1)),
           (F(-2), F(0), F(2)),
           (F(-1), F(0), F(1)))
SOBEL_Y = ((F(-1), F(-2), F(-1)),
           (F(0), F(0), F(0)),
           (F(1), F(2), F(1)))
ONES_3X3 = tuple(tuple(F(1) for _ in range(3)) for _ in range(3))
CROSS_AVG = ((F(0), F(1), F(0)),
             (F(1), F(0), F(1)),
             (F(0), F(1), F(0)))


def _ref(name: str) -> StageRef:
    return StageRef(name, 0, 0)


def build_hcd(rows: int = 64, cols: int = 64) -> Pipeline:
    """Corner detector: derivatives, products, 3x3 sums, then response."""
    stages = [
        InputStage("Img", F(0), F(255)),
        StencilStage("I_x", "Img", StencilKernel(SOBEL_X, F(1, 12))),
        StencilStage("I_y", "Img", StencilKernel(SOBEL_Y, F(1, 12))),
        PointwiseStage("I_xx", Pow(_ref("I_x"), 2)),
        PointwiseStage("I_yy", Pow(_ref("I_y"), 2)),
        PointwiseStage("I_xy", Mul(_ref("I_x"), _ref("I_y"))),
        StencilStage("S_xx", "I_xx", StencilKernel(ONES_3X3, F(1))),
        StencilStage("S_yy", "I_yy", StencilKernel(ONES_3X3, F(1))),
        StencilStage("S_xy", "I_xy", StencilKernel(ONES_3X3, F(1))),
        PointwiseStage("det", Sub(Mul(_ref("S_xx"), _ref("S_yy")),
                                  Mul(_ref("S_xy"), _ref("S_xy")))),
        PointwiseStage("trace", Add(_ref("S_xx"), _ref("S_yy"))),
        PointwiseStage("harris", Sub(_ref("det"),
                                     Mul(Const(F(1, 25)),
                                         Mul(_ref("trace"), _ref("trace"))))),
    ]
    return Pipeline("hcd", rows, cols, tuple(stages))


def build_usm(rows: int = 64, cols: int = 64,
              threshold: Fraction = F(51, 20)) -> Pipeline:
    """Unsharp mask: separable 5-tap blur, sharpen 2*img - blur, and a
    mask stage that keeps the original pixel where the detail is below
    the threshold (default 0.01 of the 8-bit scale)."""
    blur_row = ((F(1), F(4), F(6), F(4), F(1)),)
    blur_col = tuple((c,) for c in blur_row[0])
    detail = Sub(_ref("Img"), _ref("blury"))
    stages = [
        InputStage("Img", F(0), F(255)),
        StencilStage("blurx", "Img", StencilKernel(blur_row, F(1, 16))),
        StencilStage("blury", "blurx", StencilKernel(blur_col, F(1, 16))),
        PointwiseStage("sharpen", Sub(Mul(Const(F(2)), _ref("Img")), _ref("blury"))),
        PointwiseStage("mask", Select(Cmp("lt", Abs(detail), Const(threshold)),
                                      _ref("Img"), _ref("sharpen"))),
    ]
    return Pipeline("usm", rows, cols, tuple(stages))


def build_dus(rows: int = 64, cols: int = 64) -> Pipeline:
    """Binomial pyramid: downsample by two per axis, then upsample back."""
    down_row = ((F(1), F(3), F(3), F(1)),)
    down_col = tuple((c,) for c in down_row[0])
    up_row = ((F(3), F(1)),)
    up_col = tuple((c,) for c in up_row[0])
    stages = [
        InputStage("Img", F(0), F(255)),
        StencilStage("D_x", "Img", StencilKernel(down_row, F(1, 8)),
                     stride_r=F(1), stride_c=F(2)),
        StencilStage("D_y", "D_x", StencilKernel(down_col, F(1, 8)),
                     stride_r=F(2), stride_c=F(1)),
        StencilStage("U_x", "D_y", StencilKernel(up_row, F(1, 4)),
                     stride_r=F(1), stride_c=F(1, 2)),
        StencilStage("U_y", "U_x", StencilKernel(up_col, F(1, 4)),
                     stride_r=F(1, 2), stride_c=F(1)),
    ]
    return Pipeline("dus", rows, cols, tuple(stages))


def build_of(iterations: int = 4, rows: int = 64, cols: int = 64) -> Pipeline:
    """Iterative flow: ten preprocessing stages, then an averaging /
    update triple unrolled per iteration. Both frames are 8-bit inputs."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    stages: list = [
        InputStage("img1", F(0), F(255)),
        InputStage("img2", F(0), F(255)),
        PointwiseStage("I_t", Sub(_ref("img1"), _ref("img2"))),
        StencilStage("I_x", "img1", StencilKernel(SOBEL_X, F(1, 12))),
        StencilStage("I_y", "img1", StencilKernel(SOBEL_Y, F(1, 12))),
        PointwiseStage("I_xx", Pow(_ref("I_x"), 2)),
        PointwiseStage("I_yy", Pow(_ref("I_y"), 2)),
        PointwiseStage("denom", Add(Const(F(4)), Add(_ref("I_xx"), _ref("I_yy")))),
        PointwiseStage("common_x", Div(_ref("I_x"), _ref("denom"))),
        PointwiseStage("common_y", Div(_ref("I_y"), _ref("denom"))),
        PointwiseStage("v_x_0", Neg(Mul(_ref("I_t"), _ref("common_x")))),
        PointwiseStage("v_y_0", Neg(Mul(_ref("I_t"), _ref("common_y")))),
    ]
    for k in range(iterations):
        avx, avy = "av_x_%d" % k, "av_y_%d" % k
        common = "common_%d" % k
        stages += [
            StencilStage(avx, "v_x_%d" % k, StencilKernel(CROSS_AVG, F(1, 4))),
            StencilStage(avy, "v_y_%d" % k, StencilKernel(CROSS_AVG, F(1, 4))),
            PointwiseStage(common, Add(Add(Mul(_ref("I_x"), _ref(avx)),
                                           Mul(_ref("I_y"), _ref(avy))),
                                       _ref("I_t"))),
            PointwiseStage("v_x_%d" % (k + 1),
                           Sub(_ref(avx), Mul(_ref(common), _ref("common_x")))),
            PointwiseStage("v_y_%d" % (k + 1),
                           Sub(_ref(avy), Mul(_ref(common), _ref("common_y")))),
        ]
    return Pipeline("of%d" % iterations, rows, cols, tuple(stages))


def build(spec: str, rows: int = 64, cols: int = 64) -> Pipeline:
    """Constructor by id: hcd | usm | dus | of:<k> (of alone means of:4)."""
    key = spec.strip().lower()
    if key == "hcd":
        return build_hcd(rows, cols)
    if key == "usm":
        return build_usm(rows, cols)
    if key == "dus":
        return build_dus(rows, cols)
    if key == "of":
        return build_of(4, rows, cols)
    if key.startswith("of:"):
        return build_of(int(key[3:]), rows, cols)
    raise ValueError("unknown benchmark %r (want hcd, usm, dus, or of:<k>)" % spec)


BENCHMARK_IDS = ("hcd", "usm", "dus", "of:4")
