"""Figure rendering for tlsjitter CSV artifacts."""

__version__ = "0.1.0"

from .figures import RENDERERS, render
from .schemas import SchemaError, read_table

__all__ = ["RENDERERS", "render", "SchemaError", "read_table", "__version__"]
