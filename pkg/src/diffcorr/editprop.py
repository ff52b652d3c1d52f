"""Edit propagation: carry an RGBA edit layer from one image to another.

Points sampled inside the edited region are matched into the target, a
homography is fit to the matches, and the edit layer is warped and
alpha-composited onto the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backend import ExtractionConfig
from .core import FeatureMap, ImageRef, Point2D
from .geometric import EstimationError, Homography, estimate_homography
from .matching import best_match


class PropagationError(RuntimeError):
    """Edit propagation failed; carries the match set for diagnostics."""

    def __init__(self, message: str, matches=None):
        super().__init__(message)
        self.matches = matches or []


@dataclass(frozen=True)
class EditLayer:
    """An RGBA overlay plus the binary region mask where the edit lives."""

    rgba: np.ndarray  # H x W x 4, floats in [0, 1]
    region_mask: np.ndarray  # H x W bool

    def __post_init__(self):
        rgba = np.asarray(self.rgba, dtype=np.float64)
        mask = np.asarray(self.region_mask, dtype=bool)
        if rgba.ndim != 3 or rgba.shape[2] != 4:
            raise ValueError(f"rgba must be HxWx4, got {rgba.shape}")
        if mask.shape != rgba.shape[:2]:
            raise ValueError("mask/rgba shape mismatch")
        if rgba.min() < 0.0 or rgba.max() > 1.0:
            raise ValueError("rgba values must lie in [0, 1]")
        if np.any(rgba[..., 3][~mask] != 0.0):
            raise ValueError("alpha must be zero outside the region mask")
        rgba.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "rgba", rgba)
        object.__setattr__(self, "region_mask", mask)


def sample_region_points(region_mask: np.ndarray, n: int) -> list[Point2D]:
    """Stratified grid sample of up to n points inside the mask.

    The mask's bounding box is split into a near-square grid; each occupied
    cell contributes the mask pixel nearest its center. Deterministic.
    """
    mask = np.asarray(region_mask, dtype=bool)
    if n < 4:
        raise ValueError("need n >= 4")
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise ValueError("empty region mask")
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    side = int(np.ceil(np.sqrt(n)))
    points: list[Point2D] = []
    for gi in range(side):
        for gj in range(side):
            if len(points) >= n:
                break
            cy0 = y0 + (y1 - y0) * gi // side
            cy1 = y0 + (y1 - y0) * (gi + 1) // side
            cx0 = x0 + (x1 - x0) * gj // side
            cx1 = x0 + (x1 - x0) * (gj + 1) // side
            sub = mask[cy0:cy1, cx0:cx1]
            if not sub.any():
                continue
            sy, sx = np.nonzero(sub)
            cy = (cy1 - cy0 - 1) / 2.0
            cx = (cx1 - cx0 - 1) / 2.0
            best = np.argmin((sy - cy) ** 2 + (sx - cx) ** 2)
            points.append(Point2D(float(cx0 + sx[best]), float(cy0 + sy[best])))
    if len(points) < 4:
        raise ValueError(f"region too small: only {len(points)} sample points")
    return points


def warp_rgba(rgba: np.ndarray, hom: Homography, out_shape: tuple[int, int]) -> np.ndarray:
    """Inverse-warp an RGBA layer through a homography, bilinear, premultiplied.

    Premultiplying by alpha before resampling avoids color fringes at the
    region border.
    """
    H_out, W_out = out_shape
    h_in, w_in = rgba.shape[:2]
    pre = rgba.copy()
    pre[..., :3] *= pre[..., 3:4]

    inv = np.linalg.inv(hom.H)
    yy, xx = np.mgrid[0:H_out, 0:W_out]
    ones = np.ones_like(xx, dtype=np.float64)
    q = np.stack([xx.astype(np.float64), yy.astype(np.float64), ones])
    src = np.tensordot(inv, q, axes=(1, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    valid = (
        np.isfinite(sx) & np.isfinite(sy)
        & (sx >= 0) & (sx <= w_in - 1) & (sy >= 0) & (sy <= h_in - 1)
    )
    sx = np.clip(np.nan_to_num(sx), 0, w_in - 1)
    sy = np.clip(np.nan_to_num(sy), 0, h_in - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, w_in - 1)
    y1 = np.minimum(y0 + 1, h_in - 1)
    dx = (sx - x0)[..., None]
    dy = (sy - y0)[..., None]
    out = (
        pre[y0, x0] * (1 - dx) * (1 - dy)
        + pre[y0, x1] * dx * (1 - dy)
        + pre[y1, x0] * (1 - dx) * dy
        + pre[y1, x1] * dx * dy
    )
    out[~valid] = 0.0
    return out  # premultiplied RGBA


def composite_premultiplied(target_rgb: np.ndarray, warped_pre: np.ndarray) -> np.ndarray:
    """Source-over compositing of a premultiplied RGBA layer onto RGB."""
    alpha = warped_pre[..., 3:4]
    return warped_pre[..., :3] + target_rgb * (1.0 - alpha)


@dataclass(frozen=True)
class EditPropagationResult:
    composite: np.ndarray  # H x W x 3 in [0, 1]
    homography: Homography
    sampled_points: list[Point2D]
    matches: list[tuple[Point2D, Point2D, float]]
    inlier_mask: np.ndarray


def propagate_edit(
    source: ImageRef,
    edit: EditLayer,
    target: ImageRef,
    extract: Callable[[ImageRef, ExtractionConfig], FeatureMap],
    cfg: ExtractionConfig,
    n_points: int = 64,
    similarity_quantile: float = 0.25,
    ransac_threshold_px: float = 3.0,
    ransac_iters: int = 2000,
    ransac_seed: int = 0,
) -> EditPropagationResult:
    """Match region points into the target, fit a homography, warp, composite.

    Matches below the given similarity quantile of the sample are dropped
    before RANSAC to shed obvious mismatches without a hard threshold.
    """
    if edit.rgba.shape[:2] != (source.height_px, source.width_px):
        raise ValueError("edit layer dims must match the source image")
    f_src = extract(source, cfg)
    f_tgt = extract(target, cfg)
    points = sample_region_points(edit.region_mask, n_points)
    matches = []
    for p in points:
        m, _ = best_match(f_src, p, f_tgt)
        matches.append((m.source_point, m.target_point, m.similarity))
    sims = np.array([s for _, _, s in matches])
    cut = np.quantile(sims, similarity_quantile)
    kept = [(a, b) for a, b, s in matches if s >= cut]
    if len(kept) < 4:
        kept = [(a, b) for a, b, _ in matches]
    try:
        hom, inliers = estimate_homography(
            kept, ransac_threshold_px, ransac_iters, ransac_seed
        )
    except EstimationError as exc:
        raise PropagationError(str(exc), matches) from exc
    warped = warp_rgba(edit.rgba, hom, (target.height_px, target.width_px))
    composite = np.clip(
        composite_premultiplied(target.pixels, warped), 0.0, 1.0
    )
    return EditPropagationResult(composite, hom, points, matches, inliers)
