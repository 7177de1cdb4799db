from pathlib import Path

import pytest

from pipebits.benchmarks import build
from pipebits.ir import (InputStage, PointwiseStage, StencilStage,
                         parse_pipeline, serialize_pipeline)

GOLDEN = Path(__file__).parent / "golden"


def test_hcd_stage_set():
    p = build("hcd")
    assert len(p.stages) == 12
    assert sum(isinstance(s, InputStage) for s in p.stages) == 1
    assert sum(isinstance(s, StencilStage) for s in p.stages) == 5


def test_of_zero_iterations_ends_at_first_flow():
    p = build("of:0")
    computed = [s for s in p.stages if not isinstance(s, InputStage)]
    assert len(computed) == 10
    assert p.stage_names[-2:] == ("v_x_0", "v_y_0")


def test_of_four_iterations_total():
    p = build("of:4")
    computed = [s for s in p.stages if not isinstance(s, InputStage)]
    assert len(computed) == 30
    assert sum(isinstance(s, InputStage) for s in p.stages) == 2


def test_of_iteration_prefix_shared():
    a = build("of:2")
    b = build("of:3")
    assert b.stages[:len(a.stages)] == a.stages


def test_dus_linear_chain():
    p = build("dus")
    assert p.stage_names == ("Img", "D_x", "D_y", "U_x", "U_y")
    assert all(isinstance(s, StencilStage) for s in p.stages[1:])


def test_usm_has_select_mask():
    import pipebits.ir as ir
    p = build("usm")
    mask = p.stage("mask")
    assert isinstance(mask, PointwiseStage)
    assert isinstance(mask.expr, ir.Select)


def test_build_is_deterministic():
    assert build("hcd") == build("hcd")
    assert serialize_pipeline(build("of:4")) == serialize_pipeline(build("of:4"))


@pytest.mark.parametrize("bench,fname", [("hcd", "hcd.json"), ("usm", "usm.json"),
                                         ("dus", "dus.json"), ("of:4", "of4.json")])
def test_golden_serialization_is_byte_stable(bench, fname):
    assert serialize_pipeline(build(bench)) == (GOLDEN / fname).read_text()


@pytest.mark.parametrize("fname", ["hcd.json", "usm.json", "dus.json", "of4.json"])
def test_golden_files_parse_and_round_trip(fname):
    text = (GOLDEN / fname).read_text()
    assert serialize_pipeline(parse_pipeline(text)) == text


def test_unknown_benchmark_rejected():
    with pytest.raises(ValueError):
        build("sobel")


def test_of_shorthand_defaults_to_four():
    assert build("of").stage_names == build("of:4").stage_names
