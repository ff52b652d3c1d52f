"""Training-free video label propagation and segmentation metrics.

Labels travel frame to frame by softmax-weighted feature similarity: each
target cell looks at context cells within a spatial radius, keeps the top-k
most similar across the whole context set, and blends their label
distributions. Frame 0 with its ground-truth mask is always in the context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .core import FeatureMap, Point2D, grid_to_pixel, pixel_to_grid


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel soft label distribution, L x h x w; label 0 is background."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 3:
            raise ValueError(f"probs must be LxHxW, got shape {p.shape}")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be non-negative")
        sums = p.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("per-pixel probabilities must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def num_labels(self) -> int:
        return self.probs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[1:]

    def hard(self) -> np.ndarray:
        return np.argmax(self.probs, axis=0)

    @staticmethod
    def from_hard(labels: np.ndarray, num_labels: int | None = None) -> "LabelMask":
        labels = np.asarray(labels)
        L = int(labels.max()) + 1 if num_labels is None else num_labels
        probs = np.zeros((L,) + labels.shape)
        for l in range(L):
            probs[l][labels == l] = 1.0
        return LabelMask(probs)


@dataclass(frozen=True)
class PropagationConfig:
    temperature: float
    radius: int
    top_k: int
    context_frames: int

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.radius < 1:
            raise ValueError("radius must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.context_frames < 1:
            raise ValueError("context_frames must be positive")


def propagate_labels(
    frame_features: list[FeatureMap],
    first_mask: LabelMask,
    cfg: PropagationConfig,
) -> list[LabelMask]:
    """Propagate the first frame's mask through the whole sequence.

    Context for frame k: frame 0 with its ground-truth mask plus up to
    ``context_frames`` most recent predictions. Output masks are renormalized
    against accumulated rounding.
    """
    if not frame_features:
        raise ValueError("need at least one frame")
    h, w = frame_features[0].grid_height, frame_features[0].grid_width
    if first_mask.shape != (h, w):
        raise ValueError(
            f"mask resolution {first_mask.shape} != feature grid {(h, w)}"
        )
    out = [first_mask]
    for k in range(1, len(frame_features)):
        lo = max(1, k - cfg.context_frames)
        ctx_ids = [0] + list(range(lo, k))
        ctx_feats = np.stack([frame_features[i].data for i in ctx_ids]).astype(
            np.float64
        )
        ctx_probs = np.stack([out[i].probs for i in ctx_ids])
        probs = kernels.propagate_frame(
            frame_features[k].data.astype(np.float64),
            ctx_feats,
            ctx_probs,
            cfg.temperature,
            cfg.radius,
            cfg.top_k,
        )
        probs = np.maximum(probs, 0.0)
        probs /= probs.sum(axis=0, keepdims=True)
        out.append(LabelMask(probs))
    return out


# ---------------------------------------------------------------------------
# Segmentation metrics
# ---------------------------------------------------------------------------

def jaccard_J(pred: np.ndarray, gt: np.ndarray, object_id: int) -> float:
    """Region overlap |pred & gt| / |pred | gt| for one object; 1 if both empty."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    p = pred == object_id
    g = gt == object_id
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def _boundary(mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.zeros_like(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, border_value=0)
    return mask & ~eroded


def contour_F(
    pred: np.ndarray,
    gt: np.ndarray,
    object_id: int,
    tolerance_px: float | None = None,
) -> float:
    """Boundary F-measure with dilation matching within a pixel tolerance.

    Default tolerance is 0.008 x image diagonal, the de facto benchmark
    constant.
    """
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    if tolerance_px is None:
        tolerance_px = 0.008 * np.hypot(*pred.shape)
    pb = _boundary(pred == object_id)
    gb = _boundary(gt == object_id)
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    r = int(np.ceil(tolerance_px))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    disk = (yy**2 + xx**2) <= tolerance_px**2
    gb_dil = ndimage.binary_dilation(gb, structure=disk)
    pb_dil = ndimage.binary_dilation(pb, structure=disk)
    precision = np.count_nonzero(pb & gb_dil) / np.count_nonzero(pb)
    recall = np.count_nonzero(gb & pb_dil) / np.count_nonzero(gb)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def jf_mean(
    preds: list[np.ndarray], gts: list[np.ndarray], object_ids: list[int]
) -> dict[str, float]:
    """DAVIS-style J&F: per-object means of J and F, then their average."""
    j_per_obj, f_per_obj = [], []
    for oid in object_ids:
        js = [jaccard_J(p, g, oid) for p, g in zip(preds, gts)]
        fs = [contour_F(p, g, oid) for p, g in zip(preds, gts)]
        j_per_obj.append(float(np.mean(js)))
        f_per_obj.append(float(np.mean(fs)))
    jm = float(np.mean(j_per_obj))
    fm = float(np.mean(f_per_obj))
    return {"J_mean": jm, "F_mean": fm, "JF_mean": (jm + fm) / 2.0}


# ---------------------------------------------------------------------------
# Keypoint tracking via one-hot propagation
# ---------------------------------------------------------------------------

def track_keypoints(
    frame_features: list[FeatureMap],
    first_keypoints: list[Point2D],
    cfg: PropagationConfig,
) -> list[list[Point2D]]:
    """Track keypoints by propagating one channel per keypoint.

    Returns pixel-space keypoint locations for every frame (frame 0 echoes
    the input).
    """
    if not first_keypoints:
        raise ValueError("need at least one keypoint")
    f0 = frame_features[0]
    h, w = f0.grid_height, f0.grid_width
    src_dims = (f0.source_height_px, f0.source_width_px)
    n = len(first_keypoints)
    probs = np.zeros((n + 1, h, w))
    probs[0] = 1.0
    for ki, p in enumerate(first_keypoints):
        if not p.valid_in(*src_dims):
            raise ValueError(f"keypoint ({p.x}, {p.y}) outside frame 0")
        u, v = pixel_to_grid(p, src_dims, (h, w))
        j = int(np.clip(round(u), 0, w - 1))
        i = int(np.clip(round(v), 0, h - 1))
        probs[0, i, j] = 0.0
        probs[ki + 1, i, j] = 1.0
    masks = propagate_labels(frame_features, LabelMask(probs), cfg)
    tracks = []
    for fi, mask in enumerate(masks):
        dims = (
            frame_features[fi].source_height_px,
            frame_features[fi].source_width_px,
        )
        pts = []
        for ki in range(n):
            flat = int(np.argmax(mask.probs[ki + 1]))
            i, j = divmod(flat, w)
            pts.append(grid_to_pixel((float(j), float(i)), dims, (h, w)))
        tracks.append(pts)
    return tracks


def tracking_pck(
    tracks: list[list[Point2D]],
    gts: list[list[Point2D]],
    norm_dims: tuple[float, float],
    alpha: float,
) -> float:
    """Pooled PCK of tracked keypoints over frames 1..N against ground truth."""
    thresh = alpha * max(norm_dims)
    correct = total = 0
    for pred_f, gt_f in zip(tracks[1:], gts[1:]):
        for p, g in zip(pred_f, gt_f):
            total += 1
            if np.hypot(p.x - g.x, p.y - g.y) <= thresh:
                correct += 1
    if total == 0:
        raise ValueError("no keypoints to score")
    return correct / total
