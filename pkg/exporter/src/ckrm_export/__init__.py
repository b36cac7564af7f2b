"""Torch-checkpoint exporter for the ckrm analyzer."""

__version__ = "0.1.0"

from .exporter import ConvEntry, ExportError, ExportManifest, export

__all__ = ["ConvEntry", "ExportError", "ExportManifest", "export", "__version__"]
