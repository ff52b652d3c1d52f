"""Filesystem-facing evaluation harnesses behind the CLI subcommands."""

from __future__ import annotations

import glob
import json
import os
from typing import Callable

import numpy as np

from .backend import ExtractionConfig
from .core import FeatureMap, ImageRef, Point2D
from .geometric import (
    HPatchesSequence,
    evaluate_hpatches,
    keypoint_sidecar_path,
    load_homography_file,
    load_keypoint_sidecar,
)
from .imageio import load_image, load_indexed_mask
from .temporal import (
    LabelMask,
    PropagationConfig,
    jf_mean,
    propagate_labels,
    track_keypoints,
    tracking_pck,
)

ExtractFn = Callable[[ImageRef, ExtractionConfig], FeatureMap]

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".ppm", ".bmp")


class ImageStore:
    """Path-keyed image loader with in-memory memoization."""

    def __init__(self, root: str):
        self.root = root
        self._cache: dict[str, ImageRef] = {}

    def __call__(self, rel_path: str) -> ImageRef:
        if rel_path not in self._cache:
            path = os.path.join(self.root, rel_path)
            self._cache[rel_path] = load_image(path, rel_path)
        return self._cache[rel_path]


def _find_image(stem: str) -> str | None:
    for ext in _IMAGE_EXTS:
        if os.path.exists(stem + ext):
            return stem + ext
    return None


def load_hpatches_root(root: str, max_keypoints: int = 1000) -> list[HPatchesSequence]:
    """Load sequences from the native layout: <seq>/{1..6}.<ext> + H_1_<k>.

    Sequence dirs prefixed ``i_`` are illumination changes, ``v_`` viewpoint.
    Keypoints come from ``<n>.kp.jsonl`` sidecars next to each image.
    """
    sequences = []
    for seq_dir in sorted(glob.glob(os.path.join(root, "*"))):
        if not os.path.isdir(seq_dir):
            continue
        name = os.path.basename(seq_dir)
        change = "illumination" if name.startswith("i_") else "viewpoint"
        ref_path = _find_image(os.path.join(seq_dir, "1"))
        if ref_path is None:
            continue
        ref = load_image(ref_path, f"{name}/1")
        ref_kps = load_keypoint_sidecar(keypoint_sidecar_path(ref_path), max_keypoints)
        targets, gts, tgt_kps = [], [], []
        for k in range(2, 7):
            img_path = _find_image(os.path.join(seq_dir, str(k)))
            h_path = os.path.join(seq_dir, f"H_1_{k}")
            if img_path is None or not os.path.exists(h_path):
                continue
            targets.append(load_image(img_path, f"{name}/{k}"))
            gts.append(load_homography_file(h_path))
            tgt_kps.append(
                tuple(
                    load_keypoint_sidecar(
                        keypoint_sidecar_path(img_path), max_keypoints
                    )
                )
            )
        sequences.append(
            HPatchesSequence(
                name,
                ref,
                tuple(targets),
                tuple(gts),
                tuple(ref_kps),
                tuple(tgt_kps),
                change,
            )
        )
    return sequences


def run_hpatches(
    extract: ExtractFn,
    root: str,
    cfg: ExtractionConfig,
    epsilons=(1.0, 3.0, 5.0),
    threshold_px: float = 3.0,
    max_iters: int = 2000,
    run_seed: int = 0,
    max_keypoints: int = 1000,
) -> dict:
    sequences = load_hpatches_root(root, max_keypoints)
    if not sequences:
        raise ValueError(f"no sequences found under {root}")
    res = evaluate_hpatches(
        extract, sequences, cfg, epsilons, threshold_px, max_iters, run_seed,
        max_keypoints,
    )
    return {
        "accuracy": {str(e): v for e, v in res.accuracy.items()},
        "by_change_type": {
            ct: {str(e): v for e, v in accs.items()}
            for ct, accs in res.by_change_type.items()
        },
        "pairs": res.pairs,
        "failures": res.failures,
    }


def _list_frames(frames_dir: str) -> list[str]:
    frames = sorted(
        p
        for p in glob.glob(os.path.join(frames_dir, "*"))
        if os.path.splitext(p)[1].lower() in _IMAGE_EXTS
    )
    if not frames:
        raise ValueError(f"no frames found under {frames_dir}")
    return frames


def _downsample_mask(labels: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor downsample of a label map to the feature grid."""
    H, W = labels.shape
    h, w = grid
    ii = np.minimum(((np.arange(h) + 0.5) * H / h).astype(int), H - 1)
    jj = np.minimum(((np.arange(w) + 0.5) * W / w).astype(int), W - 1)
    return labels[ii[:, None], jj[None, :]]


def _upsample_mask(labels: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    h, w = labels.shape
    H, W = dims
    ii = np.minimum(((np.arange(H) + 0.5) * h / H).astype(int), h - 1)
    jj = np.minimum(((np.arange(W) + 0.5) * w / W).astype(int), w - 1)
    return labels[ii[:, None], jj[None, :]]


def run_video_segmentation(
    extract: ExtractFn,
    frames_dir: str,
    first_mask_path: str,
    cfg: ExtractionConfig,
    prop_cfg: PropagationConfig,
    annotations_dir: str | None = None,
) -> dict:
    """Propagate a first-frame mask through a frame directory.

    With an annotations directory (one label image per frame), also reports
    J, F, and J&F means over all non-background objects.
    """
    frame_paths = _list_frames(frames_dir)
    frames = [load_image(p, os.path.basename(p)) for p in frame_paths]
    feats = [extract(f, cfg) for f in frames]
    gt0 = load_indexed_mask(first_mask_path)
    num_labels = int(gt0.max()) + 1
    grid = (feats[0].grid_height, feats[0].grid_width)
    first = LabelMask.from_hard(_downsample_mask(gt0, grid), num_labels)
    masks = propagate_labels(feats, first, prop_cfg)
    preds = [
        _upsample_mask(m.hard(), (f.height_px, f.width_px))
        for m, f in zip(masks, frames)
    ]
    report: dict = {
        "frames": len(frames),
        "num_labels": num_labels,
        "config": {
            "temperature": prop_cfg.temperature,
            "radius": prop_cfg.radius,
            "top_k": prop_cfg.top_k,
            "context_frames": prop_cfg.context_frames,
        },
    }
    if annotations_dir is not None:
        ann_paths = _list_frames(annotations_dir)
        if len(ann_paths) != len(frames):
            raise ValueError("annotation count does not match frame count")
        gts = [load_indexed_mask(p) for p in ann_paths]
        object_ids = sorted(set(int(v) for v in np.unique(gt0) if v != 0))
        report["metrics"] = jf_mean(preds, gts, object_ids)
    return report


def run_keypoint_tracking(
    extract: ExtractFn,
    frames_dir: str,
    keypoints_path: str,
    cfg: ExtractionConfig,
    prop_cfg: PropagationConfig,
    alphas=(0.1, 0.2),
    norm: str = "bbox",
) -> dict:
    """Track first-frame keypoints; PCK against per-frame ground truth.

    The keypoints file is JSON: {"keypoints": [[[x, y], ...] per frame],
    "bbox": [x0, y0, x1, y1]}. PCK normalizes by the bbox dims by default,
    by frame dims with norm="image".
    """
    frame_paths = _list_frames(frames_dir)
    frames = [load_image(p, os.path.basename(p)) for p in frame_paths]
    feats = [extract(f, cfg) for f in frames]
    with open(keypoints_path) as f:
        ann = json.load(f)
    gt_frames = [
        [Point2D(float(x), float(y)) for x, y in frame_kps]
        for frame_kps in ann["keypoints"]
    ]
    if len(gt_frames) != len(frames):
        raise ValueError("keypoint annotation count does not match frame count")
    tracks = track_keypoints(feats, gt_frames[0], prop_cfg)
    if norm == "bbox":
        x0, y0, x1, y1 = ann["bbox"]
        dims = (y1 - y0, x1 - x0)
    else:
        dims = (frames[0].height_px, frames[0].width_px)
    return {
        "frames": len(frames),
        "keypoints": len(gt_frames[0]),
        "norm": norm,
        "pck": {
            str(a): tracking_pck(tracks, gt_frames, dims, a) for a in alphas
        },
        "tracks": [[[p.x, p.y] for p in f] for f in tracks],
    }
