"""Offline plotting and reporting for experiment metrics JSONL."""

from .series import RunSeries, InputError, load_metrics
from .charts import render_chart, render_curves
from .tables import render_comparison_table, final_metrics_from_series

__version__ = "0.1.0"
