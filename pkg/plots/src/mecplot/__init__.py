"""Charts for MEC planner iteration logs."""

from .charts import ChartKind, EmptyLogError, PlotSpec, SchemaError, Series, extract_series, load_run_log, render

__version__ = "0.1.0"
