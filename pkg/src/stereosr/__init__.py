"""Stereo super-resolution toolkit: degradation synthesis, forward models, metrics."""
from .tensor import SeededRng, ShapeError, StereoPair

__version__ = "0.1.0"
__all__ = ["SeededRng", "ShapeError", "StereoPair"]
