"""Figure rendering for long-format experiment CSV output.

Standalone plotting package: consumes only the CSV files and manifests
written by the experiment driver, never the library itself, so figures can
be (re)rendered from archived results alone.
"""

from .render import FigureSpec, SchemaMismatch, render

__version__ = "1.0.0"

__all__ = ["FigureSpec", "SchemaMismatch", "render", "__version__"]
