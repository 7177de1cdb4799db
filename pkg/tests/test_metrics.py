import math
from fractions import Fraction

import pytest

from pipebits.metrics import (MetricError, aae, corner_accuracy,
                              corner_misclassification, masked_metrics, psnr)

F = Fraction


def grid(rows):
    return [list(r) for r in rows]


def test_identical_corners_zero_misclassified():
    g = grid([[1, -1], [2, -2]])
    assert corner_misclassification(g, g) == 0.0
    assert corner_accuracy(g, g) == 100.0


def test_one_flip_out_of_hundred():
    ref = grid([[1] * 10 for _ in range(10)])
    test = grid([[1] * 10 for _ in range(10)])
    test[3][4] = -1
    assert corner_misclassification(ref, test) == 1.0


def test_boundary_pixels_excluded():
    ref = grid([[None, 1], [1, 1]])
    test = grid([[None, 1], [1, -5]])
    assert corner_misclassification(ref, test) == pytest.approx(100 / 3)


def test_misclassification_threshold_rescaling_invariance():
    ref = grid([[3, -2], [5, 1]])
    test = grid([[4, -1], [2, -3]])
    base = corner_misclassification(ref, test, threshold=0)
    scaled = corner_misclassification([[v * 7 for v in r] for r in ref],
                                      [[v * 7 for v in r] for r in test],
                                      threshold=0)
    assert base == scaled
    shifted = corner_misclassification([[v + 10 for v in r] for r in ref],
                                       [[v + 10 for v in r] for r in test],
                                       threshold=10)
    assert base == shifted


def test_dim_mismatch_raises():
    with pytest.raises(MetricError):
        corner_misclassification(grid([[1, 2]]), grid([[1], [2]]))


def test_masked_identical():
    sel = grid([[True, False], [True, True]])
    val = grid([[1, 2], [3, 4]])
    assert masked_metrics(sel, sel, val, val) == (0.0, 0.0)


def test_masked_single_flip():
    sel_a = grid([[True] * 4])
    sel_b = grid([[True, True, True, False]])
    val = grid([[1, 2, 3, 4]])
    frac, rms = masked_metrics(sel_a, sel_b, val, val)
    assert frac == 0.25 and rms == 0.0


def test_masked_constant_offset_rms():
    sel = grid([[True, True], [False, True]])
    ref = grid([[1, 2], [3, 4]])
    test = grid([[4, 5], [6, 7]])  # offset d = 3 everywhere
    frac, rms = masked_metrics(sel, sel, ref, test)
    assert frac == 0.0
    assert rms == pytest.approx(3.0)


def test_psnr_exact_match_is_infinite():
    g = grid([[F(1, 3), 2], [3, 4]])
    assert psnr(g, g) == math.inf


def test_psnr_uniform_error_one():
    ref = grid([[0] * 4 for _ in range(4)])
    test = grid([[1] * 4 for _ in range(4)])
    # MSE = 1 -> 10 log10(255^2) = 20 log10 255
    assert psnr(ref, test) == pytest.approx(20 * math.log10(255), abs=1e-9)


def test_psnr_uniform_error_sixteen():
    ref = grid([[0] * 4 for _ in range(4)])
    test = grid([[16] * 4 for _ in range(4)])
    assert psnr(ref, test) == pytest.approx(10 * math.log10(255 ** 2 / 256),
                                            abs=1e-9)


def test_psnr_symmetry_and_monotonicity():
    ref = grid([[0, 0], [0, 0]])
    small = grid([[1, 1], [1, 1]])
    large = grid([[2, 2], [2, 2]])
    assert psnr(ref, small) == psnr(small, ref)
    assert psnr(ref, small) > psnr(ref, large)


def test_aae_identical_flows():
    u = grid([[F(1, 2), 2]])
    v = grid([[3, F(4, 5)]])
    assert aae(u, v, u, v) == 0.0


def test_aae_unit_axes_sixty_degrees():
    # (1,0,1) vs (0,1,1): cos = 1/2 -> 60 degrees
    ru, rv = grid([[1]]), grid([[0]])
    tu, tv = grid([[0]]), grid([[1]])
    assert aae(ru, rv, tu, tv) == pytest.approx(60.0, abs=1e-9)


def test_aae_zero_flows():
    z = grid([[0, 0], [0, 0]])
    assert aae(z, z, z, z) == 0.0


def test_aae_symmetry():
    ru, rv = grid([[1, 2]]), grid([[0, 1]])
    tu, tv = grid([[0, 1]]), grid([[1, 3]])
    assert aae(ru, rv, tu, tv) == pytest.approx(aae(tu, tv, ru, rv))


def test_empty_overlap_raises():
    with pytest.raises(MetricError):
        psnr(grid([[None]]), grid([[1]]))
