"""Correspondence by nearest-neighbor lookup in feature space.

A query pixel's descriptor is read off the feature grid with bilinear
interpolation; its match in another image is the grid cell with the highest
cosine similarity. Ties break to the smallest row-major cell index so results
are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BoundingBox, FeatureMap, Point2D, grid_to_pixel, pixel_to_grid


@dataclass(frozen=True)
class MatchResult:
    source_point: Point2D
    target_point: Point2D
    similarity: float


@dataclass(frozen=True)
class SimilarityMap:
    """Dense per-cell cosine similarities against one query descriptor."""

    values: np.ndarray  # (h, w), in [-1, 1]
    target_height_px: int
    target_width_px: int

    def cell_to_pixel(self, row: int, col: int) -> Point2D:
        return grid_to_pixel(
            (float(col), float(row)),
            (self.target_height_px, self.target_width_px),
            self.values.shape,
        )


def feature_at(fmap: FeatureMap, p: Point2D) -> np.ndarray:
    """Bilinearly interpolated descriptor at a pixel location.

    Coordinates outside the grid interior clamp to the border cell.
    """
    if not p.valid_in(fmap.source_height_px, fmap.source_width_px):
        raise ValueError(f"point ({p.x}, {p.y}) outside source image")
    h, w = fmap.grid_height, fmap.grid_width
    u, v = pixel_to_grid(
        p, (fmap.source_height_px, fmap.source_width_px), (h, w)
    )
    u = min(max(u, 0.0), w - 1.0)
    v = min(max(v, 0.0), h - 1.0)
    j0, i0 = int(np.floor(u)), int(np.floor(v))
    j1, i1 = min(j0 + 1, w - 1), min(i0 + 1, h - 1)
    du, dv = u - j0, v - i0
    data = fmap.data.astype(np.float64)
    return (
        (1 - du) * (1 - dv) * data[:, i0, j0]
        + du * (1 - dv) * data[:, i0, j1]
        + (1 - du) * dv * data[:, i1, j0]
        + du * dv * data[:, i1, j1]
    )


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def best_match(
    f1: FeatureMap, p1: Point2D, f2: FeatureMap
) -> tuple[MatchResult, SimilarityMap]:
    """Dense argmax of cosine similarity over every cell of the target grid."""
    query = feature_at(f1, p1)
    sims = kernels.dense_cosine(query, f2.data)
    flat = int(np.argmax(sims))  # first occurrence = smallest row-major index
    row, col = divmod(flat, f2.grid_width)
    smap = SimilarityMap(sims, f2.source_height_px, f2.source_width_px)
    target = smap.cell_to_pixel(row, col)
    return MatchResult(p1, target, float(sims[row, col])), smap


def _descriptor_matrix(fmap: FeatureMap, points: list[Point2D]) -> np.ndarray:
    return np.stack([feature_at(fmap, p) for p in points])


def mutual_nn_matches(
    f1: FeatureMap,
    f2: FeatureMap,
    k1: list[Point2D],
    k2: list[Point2D],
) -> list[tuple[int, int, float]]:
    """Keypoint pairs that are each other's best match under cosine similarity."""
    if not k1 or not k2:
        raise ValueError("keypoint lists must be non-empty")
    d1 = _descriptor_matrix(f1, k1)
    d2 = _descriptor_matrix(f2, k2)
    n1 = np.linalg.norm(d1, axis=1)
    n2 = np.linalg.norm(d2, axis=1)
    if np.any(n1 == 0.0) or np.any(n2 == 0.0):
        raise ValueError("zero-norm keypoint descriptor")
    sim = (d1 / n1[:, None]) @ (d2 / n2[:, None]).T
    nn12 = np.argmax(sim, axis=1)
    nn21 = np.argmax(sim, axis=0)
    return [
        (i, int(j), float(sim[i, j]))
        for i, j in enumerate(nn12)
        if nn21[j] == i
    ]


def region_descriptor(fmap: FeatureMap, box: BoundingBox) -> np.ndarray:
    """Mean descriptor over the grid cells whose centers fall in the box."""
    h, w = fmap.grid_height, fmap.grid_width
    u0, v0 = pixel_to_grid(
        Point2D(box.x_min, box.y_min),
        (fmap.source_height_px, fmap.source_width_px),
        (h, w),
    )
    u1, v1 = pixel_to_grid(
        Point2D(box.x_max, box.y_max),
        (fmap.source_height_px, fmap.source_width_px),
        (h, w),
    )
    i0 = max(0, int(np.ceil(v0)))
    i1 = min(h - 1, int(np.floor(v1)))
    j0 = max(0, int(np.ceil(u0)))
    j1 = min(w - 1, int(np.floor(u1)))
    if i0 > i1 or j0 > j1:
        # Box smaller than one cell: fall back to its center descriptor.
        center = Point2D((box.x_min + box.x_max) / 2, (box.y_min + box.y_max) / 2)
        return feature_at(fmap, center)
    region = fmap.data[:, i0 : i1 + 1, j0 : j1 + 1].astype(np.float64)
    return region.mean(axis=(1, 2))


def topk_patches(
    query: np.ndarray,
    gallery: list[FeatureMap],
    k: int = 5,
    one_per_image: bool = True,
) -> list[tuple[int, Point2D, float]]:
    """Global top-k most similar cells across a gallery of feature maps.

    With ``one_per_image`` each gallery image contributes at most its single
    best cell before the global ranking.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gallery:
        raise ValueError("gallery must be non-empty")
    candidates: list[tuple[float, int, int, Point2D]] = []
    for gi, fmap in enumerate(gallery):
        sims = kernels.dense_cosine(query, fmap.data)
        smap = SimilarityMap(sims, fmap.source_height_px, fmap.source_width_px)
        if one_per_image:
            flat = [int(np.argmax(sims))]
        else:
            flat = list(np.argsort(-sims, axis=None, kind="stable"))
        for f in flat:
            row, col = divmod(f, fmap.grid_width)
            candidates.append(
                (float(sims[row, col]), gi, f, smap.cell_to_pixel(row, col))
            )
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [(gi, pt, s) for s, gi, _, pt in candidates[:k]]
