"""Batch figure rendering for the flow-harness CSV reports."""

from snsplot.figures import SchemaError, plot_convergence, plot_qsweep, render

__version__ = "0.1.0"

__all__ = ["SchemaError", "plot_convergence", "plot_qsweep", "render", "__version__"]
