from .export import (
    ExportSpec,
    HookFailure,
    ModelUnavailable,
    export,
    export_single,
    extract,
    load_model,
    preprocess,
)
from .writer import ExportError, write_atnb

__version__ = "0.1.0"

__all__ = [
    "ExportSpec",
    "ExportError",
    "HookFailure",
    "ModelUnavailable",
    "export",
    "export_single",
    "extract",
    "load_model",
    "preprocess",
    "write_atnb",
    "__version__",
]
