"""Homography estimation from feature matches and corner-correctness scoring.

RANSAC over minimal 4-point DLT hypotheses (Hartley-normalized), inliers by
reprojection error, final refit on all inliers. Matches are canonically
sorted before sampling so the estimate is invariant to input order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .backend import ExtractionConfig
from .core import FeatureMap, ImageRef, Point2D
from .matching import mutual_nn_matches


class EstimationError(RuntimeError):
    """Homography estimation could not produce a model."""


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so H[2,2] = 1 when nonzero."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {H.shape}")
        if abs(np.linalg.det(H)) <= 1e-12:
            raise ValueError("homography is singular")
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.H))

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))


def apply_homography(hom: Homography, p: Point2D) -> Point2D:
    q = hom.H @ np.array([p.x, p.y, 1.0])
    if abs(q[2]) < 1e-12:
        raise ValueError(f"point ({p.x}, {p.y}) maps to infinity")
    return Point2D(q[0] / q[2], q[1] / q[2])


def _project(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.hstack([pts, np.ones((len(pts), 1))])
    q = ph @ H.T
    return q[:, :2] / q[:, 2:3]


def _hartley_normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])
    return _project(T, pts), T


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Direct linear transform on Hartley-normalized correspondences."""
    sn, Ts = _hartley_normalize(src)
    dn, Td = _hartley_normalize(dst)
    n = len(src)
    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2] = np.c_[x, y, np.ones(n), np.zeros((n, 3)), -u * x, -u * y, -u]
    A[1::2] = np.c_[np.zeros((n, 3)), x, y, np.ones(n), -v * x, -v * y, -v]
    _, s, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(np.linalg.det(H)) <= 1e-12 or abs(H[2, 2]) < 1e-12:
        return None
    return H / H[2, 2]


def _sample_degenerate(pts: np.ndarray, eps: float = 1e-9) -> bool:
    """True if any 3 of the 4 sampled points are (near-)collinear."""
    for drop in range(4):
        tri = np.delete(pts, drop, axis=0)
        a, b = tri[1] - tri[0], tri[2] - tri[0]
        area = 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        if area < eps:
            return True
    return False


def estimate_homography(
    matches: Sequence[tuple[Point2D, Point2D]],
    threshold_px: float = 3.0,
    max_iters: int = 2000,
    seed: int = 0,
    confidence: float = 0.9999,
) -> tuple[Homography, np.ndarray]:
    """RANSAC homography fit; returns the model and a boolean inlier mask.

    Stops early once the standard confidence bound says enough hypotheses
    have been drawn for the best inlier ratio seen so far. The mask is
    aligned with the input order. Deterministic under a fixed seed and
    invariant to permutations of the match list.
    """
    if len(matches) < 4:
        raise EstimationError(f"need >= 4 matches, got {len(matches)}")
    src = np.array([[a.x, a.y] for a, _ in matches])
    dst = np.array([[b.x, b.y] for _, b in matches])
    # Canonical order decouples sampling from the caller's match order.
    order = np.lexsort((dst[:, 1], dst[:, 0], src[:, 1], src[:, 0]))
    src_c, dst_c = src[order], dst[order]
    n = len(matches)

    rng = np.random.Generator(np.random.Philox(seed))
    best_inliers: np.ndarray | None = None
    best_count = -1
    needed = max_iters
    it = 0
    while it < min(needed, max_iters):
        it += 1
        idx = rng.permutation(n)[:4]
        s4, d4 = src_c[idx], dst_c[idx]
        if _sample_degenerate(s4) or _sample_degenerate(d4):
            continue
        H = _dlt(s4, d4)
        if H is None:
            continue
        err = np.linalg.norm(_project(H, src_c) - dst_c, axis=1)
        inliers = err <= threshold_px
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            ratio = count / n
            if ratio >= 1.0:
                break
            denom = np.log1p(-min(ratio**4, 1 - 1e-12))
            needed = int(np.ceil(np.log1p(-confidence) / denom))
    if best_inliers is None or best_count < 4:
        raise EstimationError("all hypotheses degenerate or too few inliers")

    H_refit = _dlt(src_c[best_inliers], dst_c[best_inliers])
    if H_refit is None:
        raise EstimationError("degenerate refit on inlier set")
    err = np.linalg.norm(_project(H_refit, src_c) - dst_c, axis=1)
    inliers_c = err <= threshold_px
    mask = np.zeros(n, dtype=bool)
    mask[order] = inliers_c
    return Homography(H_refit), mask


def corner_error(
    h_est: Homography, h_gt: Homography, ref_dims: tuple[int, int]
) -> float:
    """Mean displacement of the four image corners under the two transforms."""
    H, W = ref_dims
    corners = [
        Point2D(0, 0),
        Point2D(W - 1, 0),
        Point2D(0, H - 1),
        Point2D(W - 1, H - 1),
    ]
    errs = []
    for c in corners:
        a = apply_homography(h_est, c)
        b = apply_homography(h_gt, c)
        errs.append(np.hypot(a.x - b.x, a.y - b.y))
    return float(np.mean(errs))


def corner_accuracy(
    h_est: Homography,
    h_gt: Homography,
    ref_dims: tuple[int, int],
    epsilons: Sequence[float] = (1.0, 3.0, 5.0),
) -> dict[float, bool]:
    err = corner_error(h_est, h_gt, ref_dims)
    return {float(e): err <= e for e in epsilons}


# ---------------------------------------------------------------------------
# HPatches-style evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HPatchesSequence:
    """One sequence: a reference image, 5 targets, and ground-truth warps."""

    name: str
    reference: ImageRef
    targets: tuple[ImageRef, ...]
    gt_homographies: tuple[Homography, ...]
    ref_keypoints: tuple[Point2D, ...]
    target_keypoints: tuple[tuple[Point2D, ...], ...]
    change_type: str  # "illumination" | "viewpoint"

    def __post_init__(self):
        if len(self.targets) != len(self.gt_homographies):
            raise ValueError("one ground-truth homography per target required")
        if len(self.targets) != len(self.target_keypoints):
            raise ValueError("one keypoint list per target required")


@dataclass(frozen=True)
class HomographyEvalResult:
    accuracy: dict[float, float]  # eps -> fraction of pairs correct
    by_change_type: dict[str, dict[float, float]]
    pairs: int
    failures: int


def evaluate_hpatches(
    extract: Callable[[ImageRef, ExtractionConfig], FeatureMap],
    sequences: Sequence[HPatchesSequence],
    cfg: ExtractionConfig,
    epsilons: Sequence[float] = (1.0, 3.0, 5.0),
    threshold_px: float = 3.0,
    max_iters: int = 2000,
    run_seed: int = 0,
    max_keypoints: int = 1000,
) -> HomographyEvalResult:
    """Mutual-NN matching + RANSAC per (reference, target) pair.

    Estimation failures count as incorrect at every epsilon.
    """
    eps = [float(e) for e in epsilons]
    totals: dict[str, int] = {}
    correct: dict[tuple[str, float], int] = {}
    failures = 0
    pairs = 0
    for seq in sequences:
        f_ref = extract(seq.reference, cfg)
        k_ref = list(seq.ref_keypoints[:max_keypoints])
        for ti, (tgt, h_gt) in enumerate(zip(seq.targets, seq.gt_homographies)):
            pairs += 1
            totals[seq.change_type] = totals.get(seq.change_type, 0) + 1
            f_tgt = extract(tgt, cfg)
            k_tgt = list(seq.target_keypoints[ti][:max_keypoints])
            pair_seed = _pair_seed(run_seed, f"{seq.name}:{ti}")
            try:
                mm = mutual_nn_matches(f_ref, f_tgt, k_ref, k_tgt)
                matched = [(k_ref[i], k_tgt[j]) for i, j, _ in mm]
                h_est, _ = estimate_homography(
                    matched, threshold_px, max_iters, pair_seed
                )
            except (EstimationError, ValueError):
                failures += 1
                continue
            ref_dims = (seq.reference.height_px, seq.reference.width_px)
            ok = corner_accuracy(h_est, h_gt, ref_dims, eps)
            for e in eps:
                if ok[e]:
                    correct[(seq.change_type, e)] = (
                        correct.get((seq.change_type, e), 0) + 1
                    )
    overall = {
        e: sum(correct.get((ct, e), 0) for ct in totals) / max(pairs, 1)
        for e in eps
    }
    by_type = {
        ct: {e: correct.get((ct, e), 0) / totals[ct] for e in eps}
        for ct in sorted(totals)
    }
    return HomographyEvalResult(overall, by_type, pairs, failures)


def _pair_seed(run_seed: int, pair_id: str) -> int:
    import hashlib

    digest = hashlib.sha256(f"{run_seed}:{pair_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def load_homography_file(path: str) -> Homography:
    """3x3 row-major whitespace-separated text matrix."""
    return Homography(np.loadtxt(path).reshape(3, 3))


def load_keypoint_sidecar(path: str, max_keypoints: int = 1000) -> list[Point2D]:
    """JSON-lines of (x, y, score); highest scores kept first."""
    import json

    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                x, y, score = json.loads(line)
                rows.append((float(score), Point2D(float(x), float(y))))
    rows.sort(key=lambda r: -r[0])
    return [p for _, p in rows[:max_keypoints]]


def keypoint_sidecar_path(image_path: str) -> str:
    return os.path.splitext(image_path)[0] + ".kp.jsonl"
