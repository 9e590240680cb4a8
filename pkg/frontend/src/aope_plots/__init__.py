"""Confidence-band curve plots for experiment CSV output."""

from .render import EXPECTED_HEADER, CurveRow, PlotSpec, SchemaError, build_figure, load_rows, render

__version__ = "0.1.0"

__all__ = [
    "EXPECTED_HEADER",
    "CurveRow",
    "PlotSpec",
    "SchemaError",
    "build_figure",
    "load_rows",
    "render",
]
