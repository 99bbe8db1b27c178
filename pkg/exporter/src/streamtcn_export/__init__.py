"""Checkpoint exporter for the streaming 1D-CNN engine."""

from .convert import MappedLayer, convert_module, map_children
from .errors import ExportError, ParityError
from .export import ExportReport, export_checkpoint
from .parity import ParityReport, first_divergence, verify_parity
from .source import (
    CausalConv1d,
    build_source_model,
    load_checkpoint,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "CausalConv1d",
    "ExportError",
    "ExportReport",
    "MappedLayer",
    "ParityError",
    "ParityReport",
    "build_source_model",
    "convert_module",
    "export_checkpoint",
    "first_divergence",
    "load_checkpoint",
    "load_config",
    "map_children",
    "verify_parity",
    "__version__",
]
