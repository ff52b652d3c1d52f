"""Shared domain types and the pixel/grid coordinate convention.

All coordinates are (x, y) with x along columns and y along rows, origin at
the center of the top-left pixel. Feature grids use the pixel-center aligned
affine map between image pixels and grid cells, so sampling stays unbiased
when the grid resolution differs from the image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Point2D:
    """A 2D location in pixel units, x = column axis, y = row axis."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def valid_in(self, height_px: int, width_px: int) -> bool:
        return 0.0 <= self.x <= width_px - 1 and 0.0 <= self.y <= height_px - 1


@dataclass(frozen=True)
class ImageRef:
    """An RGB image with a stable id. Pixels are H x W x 3 floats in [0, 1]."""

    id: str
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have positive dimensions")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite pixel values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    def contains(self, p: Point2D) -> bool:
        return p.valid_in(self.height_px, self.width_px)


@dataclass(frozen=True)
class FeatureMap:
    """A dense C x h x w descriptor grid describing a source image.

    The grid resolution (h, w) need not equal the source pixel dims; the
    coordinate maps below translate between the two. ``meta`` records how the
    features were produced (extraction config or a toy-backend tag).
    """

    data: np.ndarray
    source_height_px: int
    source_width_px: int
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature data must be CxHxW, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError("feature dims must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite entries")
        if self.source_height_px < 1 or self.source_width_px < 1:
            raise ValueError("source dims must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def grid_height(self) -> int:
        return self.data.shape[1]

    @property
    def grid_width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BoundingBox:
    """An axis-aligned box in pixel coordinates, exclusive of nothing: min < max."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


def pixel_to_grid(
    p: Point2D, source_dims: tuple[int, int], grid_dims: tuple[int, int]
) -> tuple[float, float]:
    """Map a pixel-space point to continuous grid coordinates (u, v).

    Pixel-center alignment: u = (x + 0.5) * w / W - 0.5, likewise for v.
    The map is affine and exactly inverted by :func:`grid_to_pixel`.
    """
    H, W = source_dims
    h, w = grid_dims
    if H < 1 or W < 1 or h < 1 or w < 1:
        raise ValueError("dimensions must be positive")
    u = (p.x + 0.5) * w / W - 0.5
    v = (p.y + 0.5) * h / H - 0.5
    return u, v


def grid_to_pixel(
    uv: tuple[float, float], source_dims: tuple[int, int], grid_dims: tuple[int, int]
) -> Point2D:
    """Exact inverse of :func:`pixel_to_grid`."""
    H, W = source_dims
    h, w = grid_dims
    if H < 1 or W < 1 or h < 1 or w < 1:
        raise ValueError("dimensions must be positive")
    u, v = uv
    x = (u + 0.5) * W / w - 0.5
    y = (v + 0.5) * H / h - 0.5
    return Point2D(x, y)
