"""One-shot exporter: truncated VGG-19 weights to DIRW, activation fixtures to DIRF."""

from .export import export

__version__ = "0.1.0"
__all__ = ["export"]
