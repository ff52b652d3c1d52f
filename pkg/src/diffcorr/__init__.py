"""diffcorr: dense visual correspondence from diffusion U-Net features."""

from .core import BoundingBox, FeatureMap, ImageRef, Point2D

__all__ = ["BoundingBox", "FeatureMap", "ImageRef", "Point2D"]
__version__ = "0.1.0"
