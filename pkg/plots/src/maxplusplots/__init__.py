"""Figure rendering for maxplusdp CSV bundles.

Reads only the flat files of a bundle (CSVs plus manifest.json), never the
checkpoint, and never writes into the bundle directory. Rendering is
headless (Agg backend).
"""

from .figures import (
    KINDS,
    BundleFormatError,
    FigureSpec,
    build_figure,
    plot_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "BundleFormatError",
    "FigureSpec",
    "build_figure",
    "plot_bundle",
    "__version__",
]
