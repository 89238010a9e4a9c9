"""File-in/file-out rendering of solver diagnostic reports into figures.

All numbers shown in a figure, including reference slopes and comparison
sequences, are read from the input CSV/JSON artifacts; nothing is recomputed
here, so the figures cannot disagree with the data they display.
"""

from .render import PlotSpec, SchemaError, render

__all__ = ["PlotSpec", "SchemaError", "render"]
