import numpy as np
import pytest

from diffcorr.backend import ExtractionConfig, toy_extract
from diffcorr.core import BoundingBox, ImageRef, Point2D
from diffcorr.semantic import (
    KeypointPair,
    PairResult,
    aggregate_pck,
    evaluate_dataset,
    format_prompt,
    grid_search,
    load_manifest,
    pair_from_json,
    pair_to_json,
    pck,
    save_manifest,
)


def pts(*coords):
    return [Point2D(x, y) for x, y in coords]


class TestPCK:
    def test_exact_predictions(self):
        p = pts((1, 1), (5, 5), (9, 2))
        assert pck(p, p, (10, 10), 0.1) == (3, 3)

    def test_boundary_counts_correct(self):
        # distance 5 = 0.1 * max(50, 40) exactly
        assert pck(pts((3, 4)), pts((0, 0)), (50, 40), 0.1) == (1, 1)

    def test_alpha_zero(self):
        assert pck(pts((1, 0), (0, 0)), pts((0, 0), (1, 0)), (10, 10), 0.0) == (0, 2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pck(pts((0, 0)), pts((0, 0), (1, 1)), (10, 10), 0.1)

    def test_monotone_in_alpha(self, rng):
        preds = pts(*rng.uniform(0, 20, (20, 2)))
        gts = pts(*rng.uniform(0, 20, (20, 2)))
        counts = [
            pck(preds, gts, (20, 20), a)[0] for a in np.linspace(0, 1, 11)
        ]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestAggregation:
    def test_two_pair_worked_example(self):
        results = [PairResult("cat", 1, 2), PairResult("cat", 3, 3)]
        per_point = aggregate_pck(results, "per_point")
        per_image = aggregate_pck(results, "per_image")
        assert per_point.overall == pytest.approx(0.8)
        assert per_image.overall == pytest.approx(0.75)

    def test_single_pair_aggregations_equal(self):
        results = [PairResult("dog", 2, 5)]
        assert (
            aggregate_pck(results, "per_point").overall
            == aggregate_pck(results, "per_image").overall
        )

    def test_all_correct_is_one(self):
        results = [PairResult("a", 3, 3), PairResult("b", 2, 2)]
        for agg in ("per_point", "per_image"):
            report = aggregate_pck(results, agg)
            assert report.overall == 1.0
            assert report.category_mean == 1.0

    def test_matches_independent_recomputation(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 12))
            results = []
            for _ in range(n):
                total = int(rng.integers(1, 10))
                correct = int(rng.integers(0, total + 1))
                cat = str(rng.integers(0, 3))
                results.append(PairResult(cat, correct, total))
            pp = aggregate_pck(results, "per_point").overall
            pi = aggregate_pck(results, "per_image").overall
            assert pp == pytest.approx(
                sum(r.correct for r in results) / sum(r.total for r in results)
            )
            assert pi == pytest.approx(
                np.mean([r.correct / r.total for r in results])
            )

    def test_equal_totals_make_aggregations_coincide(self):
        results = [PairResult("a", 2, 4), PairResult("a", 3, 4), PairResult("b", 0, 4)]
        assert aggregate_pck(results, "per_point").overall == pytest.approx(
            aggregate_pck(results, "per_image").overall
        )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_pck([], "per_point")

    def test_unknown_aggregation(self):
        with pytest.raises(ValueError):
            aggregate_pck([PairResult("a", 1, 1)], "median")


def identity_dataset(rng, n_pairs=3):
    images = {}
    pairs = []
    for k in range(n_pairs):
        img = ImageRef(f"img{k}", rng.random((16, 16, 3)))
        images[img.id] = img
        kps = tuple(
            (Point2D(x, y), Point2D(x, y), True)
            for x, y in rng.integers(2, 14, (5, 2)).astype(float)
        )
        pairs.append(
            KeypointPair(img.id, img.id, kps, "toy", BoundingBox(0, 0, 15, 15))
        )
    return images, pairs


class TestEvaluateDataset:
    def test_identity_pairs_perfect_at_coarse_alpha(self, rng):
        images, pairs = identity_dataset(rng)
        cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1)
        # grid cell pitch is 2px at block 0; alpha 0.2*16=3.2px covers the
        # sub-cell quantization
        report = evaluate_dataset(
            lambda img, c: toy_extract(img, c),
            pairs,
            images.__getitem__,
            cfg,
            alpha=0.2,
            norm="image",
        )
        assert report.overall == 1.0
        assert report.skipped == 0

    def test_order_invariance(self, rng):
        images, pairs = identity_dataset(rng, 4)
        cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1)
        extract = lambda img, c: toy_extract(img, c)
        a = evaluate_dataset(extract, pairs, images.__getitem__, cfg, 0.1, "image")
        b = evaluate_dataset(
            extract, list(reversed(pairs)), images.__getitem__, cfg, 0.1, "image"
        )
        assert a.per_category == b.per_category
        assert a.overall == b.overall

    def test_backend_failure_skips_pair(self, rng):
        images, pairs = identity_dataset(rng, 3)

        calls = {"n": 0}

        def flaky(img, c):
            if img.id == "img1":
                raise RuntimeError("backend down")
            return toy_extract(img, c)

        report = evaluate_dataset(
            flaky, pairs, images.__getitem__,
            ExtractionConfig(t=0, block_index=0, ensemble_size=1),
            0.2, "image",
        )
        assert report.skipped == 1

    def test_prompt_template_substitution(self):
        assert format_prompt("a photo of a [class]", "cat") == "a photo of a cat"


class TestGridSearch:
    def test_single_candidate(self, rng):
        images, pairs = identity_dataset(rng, 2)
        cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1)
        best, grid = grid_search(
            lambda img, c: toy_extract(img, c),
            pairs,
            images.__getitem__,
            cfg,
            [0],
            [1],
            alpha=0.3,
            norm="image",
        )
        assert best == (0, 1)
        assert list(grid) == [(0, 1)]

    def test_finer_block_dominates_on_identity_pairs(self, rng):
        # coarse grids quantize predictions too hard for a tight alpha
        images, pairs = identity_dataset(rng, 3)
        cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1)
        best, grid = grid_search(
            lambda img, c: toy_extract(img, c),
            pairs,
            images.__getitem__,
            cfg,
            [0],
            [0, 3],
            alpha=0.15,
            norm="image",
        )
        assert best == (0, 0)
        assert grid[(0, 0)] > grid[(0, 3)]


class TestManifestIO:
    def test_round_trip(self, tmp_path, rng):
        _, pairs = identity_dataset(rng, 3)
        path = str(tmp_path / "pairs.jsonl")
        save_manifest(path, pairs)
        back = load_manifest(path)
        assert back == pairs

    def test_json_shape(self, rng):
        _, pairs = identity_dataset(rng, 1)
        d = pair_to_json(pairs[0])
        assert d["category"] == "toy"
        assert d["target_bbox"] == [0, 0, 15, 15]
        assert pair_from_json(d) == pairs[0]
