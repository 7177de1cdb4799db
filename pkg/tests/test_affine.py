import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from pipebits.affine import (AffineForm, SymbolPool, aa_add, aa_div, aa_mul,
                             aa_neg, aa_pow, aa_recip, aa_sub, analyze_affine)
from pipebits.interval import Interval

F = Fraction


def test_x_minus_x_cancels():
    x = AffineForm(F(15, 2), {1: F(5, 2)})  # 7.5 +/- 2.5
    z = aa_sub(x, x)
    assert z.x0 == 0 and not z.terms
    assert z.interval() == Interval(F(0), F(0))


def test_disjoint_symbols_behave_like_intervals():
    z = aa_add(AffineForm(1, {1: F(1)}), AffineForm(2, {2: F(1)}))
    assert z.interval() == Interval(F(1), F(5))


def test_add_zero_form_is_identity():
    a = AffineForm(3, {1: F(2), 2: F(-1)})
    z = aa_add(a, AffineForm(0))
    assert z.x0 == a.x0 and z.terms == a.terms


def test_mul_same_symbol_quadratic_remainder():
    pool = SymbolPool()
    a = AffineForm(0, {pool.fresh(): F(85)})
    z = aa_mul(a, a, pool)
    assert z.x0 == 0
    assert sorted(z.terms.values()) == [F(7225)]
    assert z.interval() == Interval(F(-7225), F(7225))


def test_mul_constant_operand_exact():
    pool = SymbolPool()
    b = AffineForm(2, {1: F(3)})
    z = aa_mul(AffineForm(5), b, pool)
    assert z.x0 == 10 and z.terms == {1: F(15)}  # no fresh symbol


def test_mul_result_contains_true_product_range():
    # (1 + e)(1 - e) = 1 - e^2 has exact range [0, 1]
    pool = SymbolPool()
    a = AffineForm(1, {1: F(1)})
    b = AffineForm(1, {1: F(-1)})
    z = aa_mul(a, b, pool)
    lo, hi = z.interval().lo, z.interval().hi
    samples = [F(t, 16) for t in range(-16, 17)]
    true_vals = [(1 + t) * (1 - t) for t in samples]
    assert lo <= min(true_vals) and max(true_vals) <= hi
    # linear terms cancel and the remainder is rad*rad
    assert (lo, hi) == (0, 2)


def test_pow_even_nonnegative_for_centered_form():
    pool = SymbolPool()
    a = AffineForm(0, {0: F(85)})
    z = aa_pow(a, 2, pool)
    assert z.interval() == Interval(F(0), F(7225))


def test_recip_min_range_keeps_exact_endpoint_interval():
    pool = SymbolPool()
    a = AffineForm(7229, {pool.fresh(): F(7225)})  # induced [4, 14454]
    z = aa_recip(a, Interval(F(4), F(14454)), pool)
    assert z.interval() == Interval(F(1, 14454), F(1, 4))


def test_recip_negative_interval():
    pool = SymbolPool()
    a = AffineForm(-3, {pool.fresh(): F(1)})  # [-4, -2]
    z = aa_recip(a, Interval(F(-4), F(-2)), pool)
    assert z.interval() == Interval(F(-1, 2), F(-1, 4))


def test_div_contains_true_quotient():
    pool = SymbolPool()
    num = AffineForm(0, {pool.fresh(): F(85)})
    den = AffineForm(7229, {pool.fresh(): F(7225)})
    z = aa_div(num, den, Interval(F(4), F(14454)), pool)
    # sampled quotients must fall inside
    for tx in (-1, 0, 1):
        for ty in (-1, 0, 1):
            val = (85 * F(tx)) / (7229 + 7225 * F(ty))
            assert val in z.interval()


@given(st.fractions(min_value=-9, max_value=9),
       st.fractions(min_value=0, max_value=5),
       st.fractions(min_value=-9, max_value=9),
       st.fractions(min_value=0, max_value=5),
       st.fractions(min_value=-1, max_value=1),
       st.fractions(min_value=-1, max_value=1))
@settings(max_examples=120)
def test_mul_soundness_with_shared_symbols(a0, ar, b0, br, e1, e2):
    # forms share symbol 1 and each carries a private one
    pool = SymbolPool()
    for _ in range(4):
        pool.fresh()
    a = AffineForm(a0, {1: ar, 2: ar / 2})
    b = AffineForm(b0, {1: br, 3: br / 3})
    z = aa_mul(a, b, pool)
    va = a0 + ar * e1 + (ar / 2) * e2
    vb = b0 + br * e1 + (br / 3) * -e2
    # the fresh symbol may take any value in [-1, 1]; the induced
    # interval must contain the exact product for every assignment
    assert va * vb in z.interval()


def test_parity_with_interval_on_all_benchmarks(ia_results, aa_results):
    for bench, ia in ia_results.items():
        aa = aa_results[bench]
        for s in ia:
            assert aa[s].alpha == ia[s].alpha, (bench, s)


def test_affine_contained_in_interval(ia_results, aa_results):
    for bench, ia in ia_results.items():
        aa = aa_results[bench]
        for s in ia:
            assert ia[s].interval.contains_interval(aa[s].interval), (bench, s)


def test_usm_sharpen_strictly_tighter(ia_results, aa_results):
    # correlation between the image and its blur narrows the range while
    # leaving the bitwidth unchanged
    ia = ia_results["usm"]["sharpen"].interval
    aa = aa_results["usm"]["sharpen"].interval
    assert aa.lo > ia.lo and aa.hi < ia.hi


def test_x_minus_x_stage_regression():
    import pipebits.ir as ir
    p = ir.Pipeline("reg", 4, 4, (
        ir.InputStage("Img", F(0), F(255)),
        ir.PointwiseStage("z", ir.Sub(ir.StageRef("Img"), ir.StageRef("Img"))),
    ))
    res = analyze_affine(p)
    assert res["z"].interval == Interval(F(0), F(0))
    assert res["z"].alpha == 0


def test_fresh_symbols_confined_to_run():
    pool_a = SymbolPool()
    pool_b = SymbolPool()
    assert pool_a.fresh() == pool_b.fresh() == 0
    assert pool_a.fresh() == 1
