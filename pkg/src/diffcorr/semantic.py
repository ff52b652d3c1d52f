"""Keypoint-transfer evaluation: PCK in per-point and per-image flavors.

A prediction counts as correct when it lands within alpha * max(h, w) of the
ground truth, where (h, w) are the target image dims or the target bounding
box dims. Per-point pools correct/total over the whole dataset; per-image
averages each pair's own PCK.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .backend import ExtractionConfig
from .core import BoundingBox, FeatureMap, ImageRef, Point2D
from .matching import best_match


@dataclass(frozen=True)
class KeypointPair:
    """One annotated image pair: keypoints, category, and bbox for normalization."""

    source_image: str
    target_image: str
    keypoints: tuple[tuple[Point2D, Point2D, bool], ...]
    category: str
    target_bbox: BoundingBox | None = None

    def __post_init__(self):
        if not self.category:
            raise ValueError("category must be non-empty")

    def visible(self) -> list[tuple[Point2D, Point2D]]:
        return [(s, t) for s, t, vis in self.keypoints if vis]


@dataclass(frozen=True)
class PairResult:
    category: str
    correct: int
    total: int


@dataclass(frozen=True)
class PCKReport:
    alpha: float
    norm: str  # "image" | "bbox"
    aggregation: str  # "per_point" | "per_image"
    per_category: dict[str, float]
    overall: float
    category_mean: float
    skipped: int = 0


def pck(
    predictions: Sequence[Point2D],
    gts: Sequence[Point2D],
    norm_dims: tuple[float, float],
    alpha: float,
) -> tuple[int, int]:
    """Count predictions within alpha * max(norm_dims) of the ground truth."""
    if len(predictions) != len(gts):
        raise ValueError("prediction/ground-truth length mismatch")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    thresh = alpha * max(norm_dims)
    correct = 0
    for p, g in zip(predictions, gts):
        if np.hypot(p.x - g.x, p.y - g.y) <= thresh:
            correct += 1
    return correct, len(predictions)


def aggregate_pck(
    results: Iterable[PairResult],
    aggregation: str,
    alpha: float = 0.1,
    norm: str = "image",
    skipped: int = 0,
) -> PCKReport:
    """Fold per-pair (correct, total) counts into category and overall PCKs."""
    if aggregation not in ("per_point", "per_image"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    results = [r for r in results if r.total > 0]
    if not results:
        raise ValueError("no pairs with visible keypoints")
    by_cat: dict[str, list[PairResult]] = {}
    for r in results:
        by_cat.setdefault(r.category, []).append(r)

    def score(rs: list[PairResult]) -> float:
        if aggregation == "per_point":
            return sum(r.correct for r in rs) / sum(r.total for r in rs)
        return float(np.mean([r.correct / r.total for r in rs]))

    per_category = {cat: score(rs) for cat, rs in sorted(by_cat.items())}
    return PCKReport(
        alpha=alpha,
        norm=norm,
        aggregation=aggregation,
        per_category=per_category,
        overall=score(results),
        category_mean=float(np.mean(list(per_category.values()))),
        skipped=skipped,
    )


def _norm_dims(pair: KeypointPair, target: ImageRef, norm: str) -> tuple[float, float]:
    if norm == "image":
        return float(target.height_px), float(target.width_px)
    if norm == "bbox":
        if pair.target_bbox is None:
            raise ValueError(f"pair {pair.source_image}->{pair.target_image} has no bbox")
        return pair.target_bbox.height, pair.target_bbox.width
    raise ValueError(f"unknown norm {norm!r}")


def format_prompt(template: str, category: str) -> str:
    return template.replace("[class]", category)


def evaluate_pair(
    extract: Callable[[ImageRef, ExtractionConfig], FeatureMap],
    pair: KeypointPair,
    images: Callable[[str], ImageRef],
    cfg: ExtractionConfig,
    alpha: float,
    norm: str,
    prompt_template: str | None = None,
) -> PairResult:
    src = images(pair.source_image)
    tgt = images(pair.target_image)
    if prompt_template is not None:
        cfg = replace(cfg, prompt=format_prompt(prompt_template, pair.category))
    f_src = extract(src, cfg)
    f_tgt = extract(tgt, cfg)
    preds, gts = [], []
    for sp, tp in pair.visible():
        match, _ = best_match(f_src, sp, f_tgt)
        preds.append(match.target_point)
        gts.append(tp)
    correct, total = pck(preds, gts, _norm_dims(pair, tgt, norm), alpha)
    return PairResult(pair.category, correct, total)


def evaluate_dataset(
    extract: Callable[[ImageRef, ExtractionConfig], FeatureMap],
    dataset: Sequence[KeypointPair],
    images: Callable[[str], ImageRef],
    cfg: ExtractionConfig,
    alpha: float = 0.1,
    norm: str = "bbox",
    aggregation: str = "per_image",
    prompt_template: str | None = None,
) -> PCKReport:
    """Match every visible keypoint of every pair and aggregate PCK.

    Pairs whose extraction fails are skipped and counted in the report.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    results, skipped = [], 0
    for pair in dataset:
        try:
            results.append(
                evaluate_pair(extract, pair, images, cfg, alpha, norm, prompt_template)
            )
        except OSError:
            skipped += 1
        except RuntimeError:
            skipped += 1
    return aggregate_pck(results, aggregation, alpha, norm, skipped)


def grid_search(
    extract: Callable[[ImageRef, ExtractionConfig], FeatureMap],
    tuning_set: Sequence[KeypointPair],
    images: Callable[[str], ImageRef],
    base_cfg: ExtractionConfig,
    t_candidates: Sequence[int],
    n_candidates: Sequence[int],
    alpha: float = 0.1,
    norm: str = "bbox",
    aggregation: str = "per_image",
    prompt_template: str | None = None,
) -> tuple[tuple[int, int], dict[tuple[int, int], float]]:
    """Exhaustive (t, block) search; ties prefer smaller t then smaller block."""
    if not t_candidates or not n_candidates:
        raise ValueError("candidate sets must be non-empty")
    grid: dict[tuple[int, int], float] = {}
    for t in t_candidates:
        for n in n_candidates:
            cfg = replace(base_cfg, t=t, block_index=n)
            report = evaluate_dataset(
                extract, tuning_set, images, cfg, alpha, norm, aggregation,
                prompt_template,
            )
            grid[(t, n)] = report.overall
    best = max(grid, key=lambda tn: (grid[tn], -tn[0], -tn[1]))
    return best, grid


# Default search grid bracketing the useful time-step range.
DEFAULT_T_GRID = (0, 26, 51, 101, 161, 261, 421, 601, 801)


# ---------------------------------------------------------------------------
# Pair-manifest I/O (JSON lines, one pair per line)
# ---------------------------------------------------------------------------

def pair_to_json(pair: KeypointPair) -> dict:
    d: dict = {
        "source_image": pair.source_image,
        "target_image": pair.target_image,
        "category": pair.category,
        "keypoints": [
            [[s.x, s.y], [t.x, t.y], bool(v)] for s, t, v in pair.keypoints
        ],
    }
    if pair.target_bbox is not None:
        b = pair.target_bbox
        d["target_bbox"] = [b.x_min, b.y_min, b.x_max, b.y_max]
    return d


def pair_from_json(d: dict) -> KeypointPair:
    bbox = None
    if d.get("target_bbox") is not None:
        bbox = BoundingBox(*d["target_bbox"])
    kps = tuple(
        (Point2D(*s), Point2D(*t), bool(v)) for s, t, v in d["keypoints"]
    )
    return KeypointPair(
        d["source_image"], d["target_image"], kps, d["category"], bbox
    )


def load_manifest(path: str) -> list[KeypointPair]:
    pairs = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                pairs.append(pair_from_json(json.loads(line)))
    return pairs


def save_manifest(path: str, pairs: Iterable[KeypointPair]) -> None:
    with open(path, "w") as f:
        for p in pairs:
            f.write(json.dumps(pair_to_json(p), sort_keys=True) + "\n")
