"""Tri-modal (RGB + depth + thermal) prompt-learning tracker with OPE evaluation tools."""

from .data_model import BoundingBox, DegradationProfile, Sequence, TriModalFrame

__version__ = "0.1.0"

__all__ = ["BoundingBox", "DegradationProfile", "Sequence", "TriModalFrame", "__version__"]
