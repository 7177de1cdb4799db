import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from pipebits.benchmarks import build
from pipebits.images import synthesize_images
from pipebits.interval import (DivisionThroughZero, Interval, analyze_interval,
                               iv_apply, stencil_interval)
from pipebits.ir import StencilKernel
from pipebits.profiler import eval_reference, grid_min_max

F = Fraction


def iv(lo, hi):
    return Interval(F(lo), F(hi))


def brute_corners(op, a, b):
    vals = [op(x, y) for x, y in itertools.product((a.lo, a.hi), (b.lo, b.hi))]
    return min(vals), max(vals)


def test_mul_four_corners():
    got = iv_apply("mul", [iv(-85, 85), iv(-85, 85)])
    lo, hi = brute_corners(lambda x, y: x * y, iv(-85, 85), iv(-85, 85))
    assert (got.lo, got.hi) == (lo, hi) == (-7225, 7225)


def test_even_pow_sign_spanning():
    got = iv_apply("pow", [iv(-85, 85)], n=2)
    assert (got.lo, got.hi) == (0, 7225)


def test_even_pow_negative_interval():
    got = iv_apply("pow", [iv(-3, -2)], n=2)
    assert (got.lo, got.hi) == (4, 9)


def test_odd_pow():
    got = iv_apply("pow", [iv(-3, 2)], n=3)
    assert (got.lo, got.hi) == (-27, 8)


def test_sub_is_correlation_blind():
    got = iv_apply("sub", [iv(5, 10), iv(5, 10)])
    assert (got.lo, got.hi) == (-5, 5)


def test_div_through_reciprocal():
    got = iv_apply("div", [iv(-85, 85), iv(4, 14454)])
    assert (got.lo, got.hi) == (F(-85, 4), F(85, 4))  # +/- 21.25


def test_div_through_zero_raises():
    with pytest.raises(DivisionThroughZero):
        iv_apply("div", [iv(1, 2), iv(-1, 1)])


def test_select_hull():
    got = iv_apply("select", [iv(0, 1), iv(0, 255), iv(-255, 510)])
    assert (got.lo, got.hi) == (-255, 510)


def test_abs_and_neg():
    assert iv_apply("abs", [iv(-3, 2)]) == iv(0, 3)
    assert iv_apply("abs", [iv(-3, -1)]) == iv(1, 3)
    assert iv_apply("neg", [iv(-3, 2)]) == iv(-2, 3)


def test_constant_operand_tight():
    # Mul(Const c, X) is exactly c * hull(X)
    got = iv_apply("mul", [iv(3, 3), iv(-2, 5)])
    assert (got.lo, got.hi) == (-6, 15)


def test_stencil_interval_matches_expansion():
    k = StencilKernel(((F(-1), F(0), F(1)), (F(-2), F(0), F(2)),
                       (F(-1), F(0), F(1))), F(1, 12))
    got = stencil_interval(k, iv(0, 255))
    assert (got.lo, got.hi) == (-85, 85)


def test_stencil_interval_negative_scale():
    k = StencilKernel(((F(1), F(1)),), F(-1, 2))
    got = stencil_interval(k, iv(0, 10))
    assert (got.lo, got.hi) == (-10, 0)


HCD_ALPHAS = {"Img": 8, "I_x": 8, "I_y": 8, "I_xx": 13, "I_yy": 13, "I_xy": 14,
              "S_xy": 17, "S_xx": 16, "S_yy": 16, "det": 33, "trace": 17,
              "harris": 34}


def test_hcd_row(ia_results):
    got = {s: r.alpha for s, r in ia_results["hcd"].items()}
    assert got == HCD_ALPHAS


def test_dus_row(ia_results):
    assert [r.alpha for r in ia_results["dus"].values()] == [8, 8, 8, 8, 8]


def test_usm_row(ia_results):
    got = {s: r.alpha for s, r in ia_results["usm"].items()}
    # mask is 10 here (hull of both branches); see the analysis notes
    assert got == {"Img": 8, "blurx": 8, "blury": 8, "sharpen": 10, "mask": 10}


def test_monotone_in_input_range():
    wide = build("hcd")
    res_wide = analyze_interval(wide)
    import pipebits.ir as ir
    narrower = ir.Pipeline("hcd2", 64, 64,
                           (ir.InputStage("Img", F(0), F(128)),) + wide.stages[1:])
    res_narrow = analyze_interval(narrower)
    for s in wide.stage_names:
        assert res_wide[s].interval.contains_interval(res_narrow[s].interval)


@pytest.mark.parametrize("bench,dims", [("hcd", 8), ("usm", 8), ("dus", 8),
                                        ("of:4", 12)])
def test_soundness_on_random_images(bench, dims, ia_results):
    p = build(bench, dims, dims)
    res = ia_results[bench]
    for img in synthesize_images(5, dims, dims, seed=11, feature=4):
        ref = eval_reference(p, img)
        for name, grid in ref.items():
            lo, hi = grid_min_max(grid)
            assert lo in res[name].interval and hi in res[name].interval


small = st.fractions(min_value=-20, max_value=20)


@st.composite
def intervals(draw):
    a = draw(small)
    b = draw(small)
    return Interval(min(a, b), max(a, b))


@given(intervals(), intervals(), st.fractions(0, 1), st.fractions(0, 1),
       st.sampled_from(["add", "sub", "mul"]))
@settings(max_examples=150)
def test_op_soundness_by_sampling(ia, ib, ta, tb, op):
    x = ia.lo + (ia.hi - ia.lo) * ta
    y = ib.lo + (ib.hi - ib.lo) * tb
    exact = {"add": x + y, "sub": x - y, "mul": x * y}[op]
    assert exact in iv_apply(op, [ia, ib])
