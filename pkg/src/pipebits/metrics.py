"""Quality metrics comparing a fixed-point run against the exact
reference: corner classification agreement, masked-stage agreement with
RMS over agreeing pixels, PSNR, and average angular error for flow
fields.

All folds run over pixels defined in both inputs (interior only). Sums
of squares stay exact until the final logarithm or square root, so an
identical pair reports a mathematically exact zero / infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class QualityResult:
    metric: str
    value: float  # percentage, dB, degrees, or fraction; +inf allowed
    pixels: int
    higher_is_better: bool

    def meets(self, target: float) -> bool:
        if self.higher_is_better:
            return self.value >= target
        return self.value <= target


def _paired(ref, test):
    if len(ref) != len(test) or (ref and len(ref[0]) != len(test[0])):
        raise MetricError("array dims disagree: %dx%d vs %dx%d"
                          % (len(ref), len(ref[0]) if ref else 0,
                             len(test), len(test[0]) if test else 0))
    for rrow, trow in zip(ref, test):
        for r, t in zip(rrow, trow):
            if r is not None and t is not None:
                yield r, t


def corner_misclassification(ref, test, threshold=0) -> float:
    """Percentage of interior pixels whose corner decision (response >
    threshold) differs between reference and test."""
    threshold = Fraction(threshold)
    total = 0
    wrong = 0
    for r, t in _paired(ref, test):
        total += 1
        if (r > threshold) != (t > threshold):
            wrong += 1
    if total == 0:
        raise MetricError("no overlapping defined pixels")
    return 100.0 * wrong / total


def corner_accuracy(ref, test, threshold=0) -> float:
    return 100.0 - corner_misclassification(ref, test, threshold)


def masked_metrics(ref_sel, test_sel, ref_val, test_val):
    """(misclassified fraction, rms) for a selecting stage: the fraction
    of pixels whose branch choice flipped, and the root-mean-square
    error over the pixels where both runs chose the same branch."""
    total = 0
    flipped = 0
    sq = Fraction(0)
    agree = 0
    sel_pairs = _paired(ref_sel, test_sel)
    val_pairs = _paired(ref_val, test_val)
    for (rs, ts), (rv, tv) in zip(sel_pairs, val_pairs):
        total += 1
        if bool(rs) != bool(ts):
            flipped += 1
        else:
            agree += 1
            d = Fraction(rv) - Fraction(tv)
            sq += d * d
    if total == 0:
        raise MetricError("no overlapping defined pixels")
    rms = math.sqrt(sq / agree) if agree else 0.0
    return (flipped / total, rms)


def psnr(ref, test, peak=255) -> float:
    """10*log10(peak^2 / MSE) in dB; infinity on an exact match."""
    peak = Fraction(peak)
    sq = Fraction(0)
    n = 0
    for r, t in _paired(ref, test):
        d = Fraction(r) - Fraction(t)
        sq += d * d
        n += 1
    if n == 0:
        raise MetricError("no overlapping defined pixels")
    if sq == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak * n / sq)


def aae(ref_u, ref_v, test_u, test_v) -> float:
    """Mean angular error in degrees between flow fields, comparing the
    3-D unit extensions (u, v, 1)."""
    total = 0.0
    n = 0
    u_pairs = list(_paired(ref_u, test_u))
    v_pairs = list(_paired(ref_v, test_v))
    if len(u_pairs) != len(v_pairs):
        raise MetricError("flow component masks disagree")
    for (ru, tu), (rv, tv) in zip(u_pairs, v_pairs):
        ru, tu, rv, tv = float(ru), float(tu), float(rv), float(tv)
        num = ru * tu + rv * tv + 1.0
        den = math.sqrt((ru * ru + rv * rv + 1.0) * (tu * tu + tv * tv + 1.0))
        c = min(1.0, max(-1.0, num / den))
        total += math.degrees(math.acos(c))
        n += 1
    if n == 0:
        raise MetricError("no overlapping defined pixels")
    return total / n


METRIC_DIRECTIONS = {
    "corners": True,   # accuracy %, higher is better
    "mask": False,     # misclassified fraction
    "psnr": True,      # dB
    "aae": False,      # degrees
}
