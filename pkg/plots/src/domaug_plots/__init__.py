"""Figure rendering over the benchmark CLI's exported JSON reports and CSVs.

This package deliberately never imports the training package; it consumes
only the files the CLI emits, so the two components stay coupled through the
documented file formats alone.
"""

from .io import OtddReport, PlotsError, ProjectionTable, load_otdd_report, load_projection
from .kde import mean_pairwise_overlap, overlap_statistic, scott_factor
from .render import KINDS, FigureJob, render

__all__ = [
    "FigureJob",
    "KINDS",
    "OtddReport",
    "PlotsError",
    "ProjectionTable",
    "load_otdd_report",
    "load_projection",
    "mean_pairwise_overlap",
    "overlap_statistic",
    "render",
    "scott_factor",
]
