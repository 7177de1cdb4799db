"""Fixed-point bitwidth analysis for image-processing pipeline DAGs."""

from .fixedpoint import (FixedPointFormat, FixedPointValue, alpha_from_range,
                         fx_add, fx_div, fx_mul, fx_sub, quantize)
from .interval import DivisionThroughZero, Interval, analyze_interval, iv_apply
from .ir import (Pipeline, PipelineError, parse_pipeline, rewrite_squares,
                 serialize_pipeline, topo_order)

__version__ = "0.1.0"

__all__ = [
    "FixedPointFormat", "FixedPointValue", "alpha_from_range", "quantize",
    "fx_add", "fx_sub", "fx_mul", "fx_div",
    "Interval", "DivisionThroughZero", "analyze_interval", "iv_apply",
    "Pipeline", "PipelineError", "parse_pipeline", "serialize_pipeline",
    "topo_order", "rewrite_squares",
]
