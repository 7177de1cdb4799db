from fractions import Fraction

import pytest

import pipebits.ir as ir
from pipebits.benchmarks import build
from pipebits.fixedpoint import SATURATE, WRAP, FixedPointFormat
from pipebits.images import image_from_rows, synthesize_images
from pipebits.interval import analyze_interval
from pipebits.profiler import eval_reference
from pipebits.simulator import SimulationResult, TypeAssignment, simulate

F = Fraction


def formats_from(ranges, beta):
    return {name: FixedPointFormat(max(r.alpha, 1 - beta), beta, r.interval.lo < 0)
            for name, r in ranges.items()}


@pytest.fixture(scope="module")
def hcd8():
    return build("hcd", 8, 8)


@pytest.fixture(scope="module")
def hcd_formats(hcd8):
    return analyze_interval(hcd8)


def quantization_error_bounds(p, ranges, beta):
    """Worst-case |simulated - exact| per stage: one truncation of
    2**-beta per stage boundary, amplified through products by operand
    magnitudes (from the interval analysis). Independent of the
    simulator's own arithmetic."""
    eps = F(1, 2 ** beta)
    mag = {name: max(abs(r.interval.lo), abs(r.interval.hi))
           for name, r in ranges.items()}
    err: dict[str, Fraction] = {}

    def expr_err(e):
        if isinstance(e, ir.Const):
            return F(0), abs(e.value)
        if isinstance(e, ir.StageRef):
            return err[e.stage], mag[e.stage]
        if isinstance(e, (ir.Add, ir.Sub)):
            ea, ma = expr_err(e.lhs)
            eb, mb = expr_err(e.rhs)
            return ea + eb, ma + mb
        if isinstance(e, ir.Mul):
            ea, ma = expr_err(e.lhs)
            eb, mb = expr_err(e.rhs)
            return ma * eb + mb * ea + ea * eb, ma * mb
        if isinstance(e, ir.Pow):
            ea, ma = expr_err(e.base)
            out_e, out_m = ea, ma
            for _ in range(e.n - 1):
                out_e = out_m * ea + ma * out_e + out_e * ea
                out_m = out_m * ma
            return out_e, out_m
        if isinstance(e, ir.Neg):
            return expr_err(e.arg)
        raise AssertionError("not needed for this pipeline: %r" % (e,))

    for s in ir.topo_order(p):
        if isinstance(s, ir.InputStage):
            err[s.name] = F(0)  # integers quantize exactly
        elif isinstance(s, ir.StencilStage):
            tap = err[s.input]
            total = sum(abs(c) for row in s.kernel.coeffs for c in row)
            err[s.name] = abs(s.kernel.scale) * total * tap + eps
        else:
            e, _ = expr_err(s.expr)
            err[s.name] = e + eps
    return err


def test_wide_formats_track_reference(hcd8, hcd_formats):
    img = synthesize_images(1, 8, 8, seed=13, feature=4)[0]
    t = TypeAssignment(formats_from(hcd_formats, 32))
    sim = simulate(hcd8, t, img)
    ref = eval_reference(hcd8, img)
    bounds = quantization_error_bounds(hcd8, hcd_formats, 32)
    seen = 0
    for name in hcd8.stage_names:
        dec = sim.decoded(name)
        for rrow, srow in zip(ref[name], dec):
            for r, s in zip(rrow, srow):
                assert (r is None) == (s is None)
                if r is None:
                    continue
                assert abs(r - s) <= bounds[name], name
                seen += 1
    assert seen > 0
    # the bound itself is tight enough to mean something
    assert bounds["harris"] < 1


def test_zero_saturations_under_sound_alpha(hcd8, hcd_formats):
    img = synthesize_images(1, 8, 8, seed=14, feature=4)[0]
    sim = simulate(hcd8, TypeAssignment(formats_from(hcd_formats, 4)), img)
    assert sim.total_saturations == 0


def test_undersized_alpha_saturates_and_clamps():
    p = ir.Pipeline("t", 2, 2, (ir.InputStage("Img", F(0), F(255)),
                                ir.PointwiseStage("sq", ir.Pow(ir.StageRef("Img"), 2))))
    img = image_from_rows("x", [[200, 1], [2, 3]])
    formats = {"Img": FixedPointFormat(8, 0, False),
               "sq": FixedPointFormat(8, 0, False)}  # 40000 clamps to 255
    sim = simulate(p, TypeAssignment(formats), img)
    assert sim.saturation_events["sq"] == 1
    assert sim.decoded("sq")[0][0] == 255
    assert sim.decoded("sq")[0][1] == 1


def test_wrap_mode_wraps_instead_of_clamping():
    p = ir.Pipeline("t", 2, 2, (ir.InputStage("Img", F(0), F(255)),
                                ir.PointwiseStage("z", ir.StageRef("Img"))))
    img = image_from_rows("x", [[200, 1], [2, 3]])
    formats = {"Img": FixedPointFormat(8, 0, False),
               "z": FixedPointFormat(4, 0, False)}
    sim = simulate(p, TypeAssignment(formats, overflow=WRAP), img)
    assert sim.decoded("z")[0][0] == 200 % 16
    assert sim.saturation_events["z"] == 1


def test_identity_stage_transparency(hcd_formats):
    # inserting a wide pass-through stage changes nothing downstream
    base = build("hcd", 8, 8)
    stages = list(base.stages)
    wide = ir.PointwiseStage("via", ir.StageRef("Img"))
    resumed = []
    for s in stages:
        resumed.append(s)
        if s.name == "Img":
            resumed.append(wide)
    def retarget(e):
        if isinstance(e, ir.StageRef) and e.stage == "Img":
            return ir.StageRef("via", e.di, e.dj)
        kids = ir.expr_children(e)
        if not kids:
            return e
        if isinstance(e, (ir.Add, ir.Sub, ir.Mul, ir.Div)):
            return type(e)(retarget(e.lhs), retarget(e.rhs))
        if isinstance(e, ir.Pow):
            return ir.Pow(retarget(e.base), e.n)
        if isinstance(e, ir.Neg):
            return ir.Neg(retarget(e.arg))
        raise AssertionError
    rerouted = []
    for s in resumed:
        if isinstance(s, ir.PointwiseStage) and s.name != "via":
            rerouted.append(ir.PointwiseStage(s.name, retarget(s.expr)))
        elif isinstance(s, ir.StencilStage) and s.input == "Img":
            rerouted.append(ir.StencilStage(s.name, "via", s.kernel,
                                            s.stride_r, s.stride_c))
        else:
            rerouted.append(s)
    p2 = ir.Pipeline("hcd-via", 8, 8, tuple(rerouted))
    img = synthesize_images(1, 8, 8, seed=15, feature=4)[0]
    ranges = analyze_interval(build("hcd", 8, 8))
    formats = formats_from(ranges, 6)
    formats2 = dict(formats)
    formats2["via"] = FixedPointFormat(9, 40, False)  # effectively exact
    a = simulate(build("hcd", 8, 8), TypeAssignment(formats), img)
    b = simulate(p2, TypeAssignment(formats2), img)
    for name in ("I_x", "det", "harris"):
        assert a.decoded(name) == b.decoded(name)


def test_single_stage_beta_monotone_error(hcd8, hcd_formats):
    img = synthesize_images(1, 8, 8, seed=16, feature=4)[0]
    ref = eval_reference(hcd8, img)

    def stage_err(beta_ix):
        formats = formats_from(hcd_formats, 8)
        formats["I_x"] = FixedPointFormat(8, beta_ix, True)
        sim = simulate(hcd8, TypeAssignment(formats), img)
        dec = sim.decoded("I_x")
        return max(abs(r - s) for rrow, srow in zip(ref["I_x"], dec)
                   for r, s in zip(rrow, srow) if r is not None)

    errs = [stage_err(b) for b in (0, 2, 4, 8)]
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def test_missing_format_rejected(hcd8, hcd_formats):
    formats = formats_from(hcd_formats, 2)
    formats.pop("det")
    with pytest.raises(ValueError, match="det"):
        simulate(hcd8, TypeAssignment(formats),
                 image_from_rows("x", [[0] * 8] * 8))


def test_input_format_must_cover_range(hcd8, hcd_formats):
    formats = formats_from(hcd_formats, 2)
    formats["Img"] = FixedPointFormat(4, 2, False)
    with pytest.raises(ValueError, match="not representable"):
        simulate(hcd8, TypeAssignment(formats),
                 image_from_rows("x", [[0] * 8] * 8))


def test_division_by_zero_reports_stage_and_pixel():
    p = ir.Pipeline("t", 2, 2, (
        ir.InputStage("Img", F(0), F(255)),
        ir.PointwiseStage("z", ir.Div(ir.Const(F(1)), ir.StageRef("Img"))),
    ))
    img = image_from_rows("x", [[0, 1], [1, 1]])
    formats = {"Img": FixedPointFormat(8, 0, False),
               "z": FixedPointFormat(8, 8, True)}
    from pipebits.profiler import EvaluationError
    with pytest.raises(EvaluationError, match=r"z.*\(0,0\)"):
        simulate(p, TypeAssignment(formats), img)


def test_select_follows_quantized_condition():
    thr = F(51, 20)
    p = build("usm", 12, 12)
    ranges = analyze_interval(p)
    img = synthesize_images(1, 12, 12, seed=17, feature=4)[0]
    sim = simulate(p, TypeAssignment(formats_from(ranges, 10)), img)
    dec_mask = sim.decoded("mask")
    dec_img = sim.decoded("Img")
    dec_blur = sim.decoded("blury")
    dec_sharp = sim.decoded("sharpen")
    for i in range(12):
        for j in range(12):
            m = dec_mask[i][j]
            if m is None:
                continue
            want = dec_img[i][j] if abs(dec_img[i][j] - dec_blur[i][j]) < thr \
                else dec_sharp[i][j]
            # the mask output re-quantizes the chosen branch
            assert abs(m - want) < F(1, 2 ** 10)
