"""Gaze-driven foveated frame warping, QP-map encoding and closed-loop streaming simulation."""

from .codec import FORMAT_VERSION

__version__ = "0.1.0"
VERSION_STRING = f"{__version__} (bitstream format {FORMAT_VERSION})"

__all__ = ["FORMAT_VERSION", "VERSION_STRING", "__version__"]
