"""Acceptance gate: one test per top-level criterion, one printed line each.

Every test prints ``[ACCEPTANCE] <name>: PASS|FAIL`` (visible with -s or in
captured output on failure) and then asserts, so the suite doubles as a
checklist. Oracles here are deliberately independent reimplementations:
plain loops, no calls back into the code paths under test.
"""

import json
import time

import numpy as np
import pytest
from click.testing import CliRunner

from diffcorr.backend import (
    ExtractionConfig,
    add_noise,
    linear_beta_schedule,
    toy_extract,
)
from diffcorr.cli import main as cli_main
from diffcorr.core import BoundingBox, FeatureMap, ImageRef, Point2D, grid_to_pixel
from diffcorr.editprop import EditLayer, propagate_edit
from diffcorr.geometric import (
    Homography,
    apply_homography,
    corner_accuracy,
    corner_error,
    estimate_homography,
)
from diffcorr.matching import best_match, mutual_nn_matches
from diffcorr.semantic import (
    KeypointPair,
    PairResult,
    aggregate_pck,
    pck,
    save_manifest,
)
from diffcorr.temporal import LabelMask, PropagationConfig, jf_mean, propagate_labels
from diffcorr.imageio import save_image

from test_geometric import warp_image


def report(name: str, ok: bool, detail: str = ""):
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. Forward-noising exactness
# ---------------------------------------------------------------------------

def test_noising_exactness():
    rng = np.random.default_rng(7)
    schedule = linear_beta_schedule(1000)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        t = int(rng.integers(0, 1000))
        x0 = rng.standard_normal((4, 5))
        eps = rng.standard_normal((4, 5))
        got = add_noise(x0, t, eps, schedule)
        ab = schedule.alpha_bar[t]
        want = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
        worst = max(worst, float(np.abs(got - want).max()))
    # edge cases: pure-signal and pure-noise inputs reproduce exactly
    x0 = rng.standard_normal((3, 3))
    zero = np.zeros_like(x0)
    t = 500
    ab = schedule.alpha_bar[t]
    exact_signal = (add_noise(x0, t, zero, schedule) == np.sqrt(ab) * x0).all()
    exact_noise = (add_noise(zero, t, x0, schedule) == np.sqrt(1.0 - ab) * x0).all()
    elapsed = time.perf_counter() - start
    report(
        "noising-exactness",
        worst <= 1e-9 and exact_signal and exact_noise and elapsed < 1.0,
        f"max dev {worst:.2e}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# 2. Matching oracle equivalence
# ---------------------------------------------------------------------------

def _brute_best_cell(query, data):
    """First-occurrence argmax of cosine over all cells, plain loops."""
    C, h, w = data.shape
    qn = float(np.sqrt(sum(float(q) * float(q) for q in query)))
    best_val, best_cell = -2.0, None
    for i in range(h):
        for j in range(w):
            cell = data[:, i, j].astype(np.float64)
            cn = float(np.linalg.norm(cell))
            s = float(np.clip(np.dot(query, cell) / (qn * cn), -1.0, 1.0))
            if s > best_val:
                best_val, best_cell = s, (i, j)
    return best_cell, best_val


def _cell_centers(fmap):
    h, w = fmap.grid_height, fmap.grid_width
    dims = (fmap.source_height_px, fmap.source_width_px)
    return [
        grid_to_pixel((float(j), float(i)), dims, (h, w))
        for i in range(h)
        for j in range(w)
    ]


def test_matching_oracle_equivalence():
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    for trial in range(200):
        a = rng.standard_normal((16, 8, 8))
        b = rng.standard_normal((16, 8, 8))
        if trial % 10 == 0:
            # plant duplicate cells so tie-break policy is actually exercised
            b[:, 6, 5] = b[:, 1, 2]
            b[:, 7, 7] = b[:, 1, 2]
        f1 = FeatureMap(a, 64, 64)
        f2 = FeatureMap(b, 64, 64)
        centers1 = _cell_centers(f1)
        centers2 = _cell_centers(f2)

        qi = int(rng.integers(0, 64))
        result, _ = best_match(f1, centers1[qi], f2)
        query = f1.data[:, qi // 8, qi % 8].astype(np.float64)
        (bi, bj), bval = _brute_best_cell(query, f2.data)
        want = grid_to_pixel((float(bj), float(bi)), (64, 64), (8, 8))
        assert result.target_point == want, f"trial {trial}"
        assert abs(result.similarity - bval) < 1e-12

        k1 = [centers1[i] for i in rng.choice(64, size=12, replace=False)]
        k2 = [centers2[i] for i in rng.choice(64, size=12, replace=False)]
        got = mutual_nn_matches(f1, f2, k1, k2)
        # O(n^2) oracle with first-occurrence argmax on both sides
        d1 = [f1.data[:, int((p.y - 3.5) / 8), int((p.x - 3.5) / 8)].astype(np.float64) for p in k1]
        d2 = [f2.data[:, int((p.y - 3.5) / 8), int((p.x - 3.5) / 8)].astype(np.float64) for p in k2]
        sim = np.array(
            [[np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)) for v in d2] for u in d1]
        )
        nn12 = [int(np.argmax(sim[i])) for i in range(12)]
        nn21 = [int(np.argmax(sim[:, j])) for j in range(12)]
        want_pairs = [(i, j) for i, j in enumerate(nn12) if nn21[j] == i]
        assert [(i, j) for i, j, _ in got] == want_pairs, f"trial {trial}"
    elapsed = time.perf_counter() - start
    report("matching-oracle", elapsed < 10.0, f"200 maps, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 3. Self-matching identity
# ---------------------------------------------------------------------------

def test_self_matching_identity():
    rng = np.random.default_rng(3)
    img = ImageRef("self", rng.random((48, 48, 3)))
    cfg = ExtractionConfig(t=0, block_index=1, ensemble_size=1)
    fmap = toy_extract(img, cfg)
    hits = total = 0
    for center in _cell_centers(fmap):
        result, _ = best_match(fmap, center, fmap)
        total += 1
        hits += result.target_point == center
    report("self-matching-identity", hits == total, f"{hits}/{total} cells")


# ---------------------------------------------------------------------------
# 4. PCK metric oracle
# ---------------------------------------------------------------------------

def test_pck_oracle():
    rng = np.random.default_rng(21)
    ok = True
    for _ in range(50):
        n_pairs = int(rng.integers(2, 6))
        results = []
        raw = []  # (category, [bool correctness]) for the oracle
        for pi in range(n_pairs):
            n = int(rng.integers(1, 8))
            dims = (float(rng.integers(20, 100)), float(rng.integers(20, 100)))
            alpha = float(rng.uniform(0.05, 0.3))
            preds = [Point2D(*rng.uniform(0, 19, 2)) for _ in range(n)]
            gts = [Point2D(*rng.uniform(0, 19, 2)) for _ in range(n)]
            correct, total = pck(preds, gts, dims, alpha)
            flags = [
                ((p.x - g.x) ** 2 + (p.y - g.y) ** 2) ** 0.5 <= alpha * max(dims)
                for p, g in zip(preds, gts)
            ]
            ok &= (correct, total) == (sum(flags), n)
            cat = f"c{pi % 2}"
            results.append(PairResult(cat, correct, total))
            raw.append((cat, flags))
        rep_pt = aggregate_pck(results, "per_point")
        rep_im = aggregate_pck(results, "per_image")
        all_flags = [f for _, flags in raw for f in flags]
        ok &= abs(rep_pt.overall - sum(all_flags) / len(all_flags)) < 1e-12
        per_image = [sum(flags) / len(flags) for _, flags in raw]
        ok &= abs(rep_im.overall - sum(per_image) / len(per_image)) < 1e-12
    # two-pair worked example: pooled 4/5 vs averaged (1/2 + 3/3)/2
    two = [PairResult("x", 1, 2), PairResult("x", 3, 3)]
    exact = (
        aggregate_pck(two, "per_point").overall == 0.8
        and aggregate_pck(two, "per_image").overall == 0.75
    )
    report("pck-oracle", ok and exact, "50 fixtures + 0.8/0.75 example")


# ---------------------------------------------------------------------------
# 5. Homography recovery under outliers
# ---------------------------------------------------------------------------

def _random_homography(rng):
    H = np.eye(3)
    H[:2, :2] += rng.uniform(-0.05, 0.05, (2, 2))
    H[0, 2], H[1, 2] = rng.uniform(-8, 8, 2)
    H[2, :2] = rng.uniform(-1e-4, 1e-4, 2)
    return Homography(H)


def test_homography_recovery():
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    good = 0
    trials = 100
    for trial in range(trials):
        gt = _random_homography(rng)
        matches = []
        for _ in range(60):
            p = Point2D(*rng.uniform(5, 59, 2))
            matches.append((p, apply_homography(gt, p)))
        outliers = 0
        while outliers < 40:  # 40% contamination, forced well past threshold
            p = Point2D(*rng.uniform(5, 59, 2))
            q = Point2D(*rng.uniform(0, 64, 2))
            true_q = apply_homography(gt, p)
            if np.hypot(q.x - true_q.x, q.y - true_q.y) > 7.0:
                matches.append((p, q))
                outliers += 1
        est, _ = estimate_homography(matches, threshold_px=3.0, max_iters=2000, seed=trial)
        if corner_error(est, gt, (64, 64)) < 1.0:
            good += 1
    elapsed = time.perf_counter() - start
    # boundary case: mean corner error exactly epsilon still counts correct
    T = np.eye(3)
    T[0, 2] = 3.0
    boundary = corner_accuracy(Homography(T), Homography.identity(), (64, 64), (3.0,))
    report(
        "homography-recovery",
        good >= 99 and elapsed < 60.0 and boundary[3.0] == 1.0,
        f"{good}/100 trials < 1px, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 6. Label propagation
# ---------------------------------------------------------------------------

def _random_mask(rng, h, w, num_labels=3):
    hard = rng.integers(0, num_labels, (h, w))
    return LabelMask.from_hard(hard, num_labels)


def test_label_propagation():
    rng = np.random.default_rng(13)
    cfg = PropagationConfig(temperature=1e-4, radius=2, top_k=5, context_frames=8)

    feats = FeatureMap(rng.standard_normal((16, 12, 12)), 96, 96)
    mask = _random_mask(rng, 12, 12)

    # static video: identical features over 35 frames; also the sum-to-1 check
    static = propagate_labels([feats] * 35, mask, cfg)
    static_ok = all((m.hard() == mask.hard()).all() for m in static)
    sums_ok = all(
        np.abs(m.probs.sum(axis=0) - 1.0).max() <= 1e-6 for m in static
    )
    gts = [mask.hard()] * 35
    metrics = jf_mean([m.hard() for m in static], gts, [1, 2])
    static_ok &= metrics["J_mean"] == 1.0 and metrics["F_mean"] == 1.0

    # one-cell translation: labels follow the features
    base = rng.standard_normal((16, 12, 12))
    shifted = FeatureMap(np.roll(base, 1, axis=2), 96, 96)
    hard0 = np.zeros((12, 12), dtype=int)
    hard0[4:9, 4:9] = 1
    m0 = LabelMask.from_hard(hard0, 2)
    moved = propagate_labels([FeatureMap(base, 96, 96), shifted], m0, cfg)
    translation_ok = (moved[1].hard() == np.roll(hard0, 1, axis=1)).all()

    # near-zero temperature reproduces a hard nearest-neighbor oracle
    frames = [FeatureMap(rng.standard_normal((8, 10, 10)), 80, 80) for _ in range(4)]
    m = _random_mask(rng, 10, 10)
    got = propagate_labels(frames, m, cfg)
    oracle = [m.probs]
    r = cfg.radius
    for k in range(1, 4):
        ctx_ids = [0] + list(range(max(1, k - cfg.context_frames), k))
        probs = np.zeros_like(m.probs)
        tgt = frames[k].data.astype(np.float64)
        for i in range(10):
            for j in range(10):
                q = tgt[:, i, j]
                best, best_lab = -np.inf, None
                for ci in ctx_ids:
                    src = frames[ci].data.astype(np.float64)
                    for di in range(-r, r + 1):
                        for dj in range(-r, r + 1):
                            ii, jj = i + di, j + dj
                            if not (0 <= ii < 10 and 0 <= jj < 10):
                                continue
                            v = src[:, ii, jj]
                            s = np.dot(q, v) / (np.linalg.norm(q) * np.linalg.norm(v))
                            if s > best:
                                best, best_lab = s, (ci, ii, jj)
                ci, ii, jj = best_lab
                probs[:, i, j] = oracle[ci][:, ii, jj]
        oracle.append(probs)
    hardnn_ok = all(
        (g.hard() == np.argmax(o, axis=0)).all() for g, o in zip(got, oracle)
    )

    report(
        "label-propagation",
        static_ok and sums_ok and translation_ok and hardnn_ok,
        f"static={static_ok} sums={sums_ok} shift={translation_ok} hardNN={hardnn_ok}",
    )


# ---------------------------------------------------------------------------
# 7. Edit propagation registration
# ---------------------------------------------------------------------------

def test_edit_propagation():
    rng = np.random.default_rng(17)
    cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1)
    src = ImageRef("src", rng.random((48, 48, 3)))
    rgba = np.zeros((48, 48, 4))
    m = np.zeros((48, 48), dtype=bool)
    m[10:38, 10:38] = True
    rgba[10:38, 10:38] = [1.0, 0.0, 0.0, 0.8]
    edit = EditLayer(rgba, m)

    pitch = 2.0  # block 0 downsamples by 2
    self_res = propagate_edit(src, edit, src, toy_extract, cfg)
    self_err = corner_error(self_res.homography, Homography.identity(), (48, 48))

    T = np.eye(3)
    T[0, 2], T[1, 2] = 4.0, -2.0
    gt = Homography(T)
    tgt = ImageRef("tgt", warp_image(np.asarray(src.pixels), gt, (48, 48)))
    warp_res = propagate_edit(src, edit, tgt, toy_extract, cfg)
    warp_err = corner_error(warp_res.homography, gt, (48, 48))

    report(
        "edit-propagation",
        self_err < pitch and warp_err < 2.0,
        f"self {self_err:.2f}px < pitch, warp {warp_err:.2f}px < 2px",
    )


# ---------------------------------------------------------------------------
# 8. End-to-end CLI determinism
# ---------------------------------------------------------------------------

def _build_eval_fixtures(root, rng):
    """One miniature dataset per eval subcommand, all under ``root``."""
    from PIL import Image

    img_root = root / "imgs"
    img_root.mkdir()
    save_image(str(img_root / "a.png"), rng.random((32, 32, 3)))
    pairs = [
        KeypointPair(
            "a.png", "a.png",
            ((Point2D(4.5, 4.5), Point2D(4.5, 4.5), True),
             (Point2D(10.5, 10.5), Point2D(24.5, 24.5), True)),
            "cat", BoundingBox(0, 0, 31, 31),
        )
    ]
    manifest = root / "pairs.jsonl"
    save_manifest(str(manifest), pairs)

    hp = root / "hp" / "v_seq"
    hp.mkdir(parents=True)
    base = rng.random((64, 64, 3))
    T = np.eye(3)
    T[0, 2] = 2.0
    hom = Homography(T)
    save_image(str(hp / "1.png"), base)
    save_image(str(hp / "2.png"), warp_image(base, hom, (64, 64)))
    np.savetxt(str(hp / "H_1_2"), hom.H)
    for stem in ("1", "2"):
        with open(hp / f"{stem}.kp.jsonl", "w") as f:
            for x in range(8, 56, 8):
                for y in range(8, 56, 8):
                    off = 2.0 if stem == "2" else 0.0
                    f.write(json.dumps([x + off, float(y), 1.0]) + "\n")

    frames = root / "frames"
    anns = root / "anns"
    frames.mkdir()
    anns.mkdir()
    vid = rng.random((32, 32, 3))
    hard = np.zeros((32, 32), dtype=np.uint8)
    hard[8:20, 10:24] = 1
    for k in range(3):
        save_image(str(frames / f"{k:05d}.png"), vid)
        Image.fromarray(hard, mode="P").save(anns / f"{k:05d}.png")
    kp_json = root / "kps.json"
    kp_json.write_text(json.dumps(
        {"keypoints": [[[4.5, 8.5], [20.5, 12.5]]] * 3, "bbox": [0, 0, 32, 32]}
    ))
    return img_root, manifest, root / "hp", frames, anns, kp_json


def test_cli_determinism(tmp_path):
    rng = np.random.default_rng(29)
    img_root, manifest, hp_root, frames, anns, kp_json = _build_eval_fixtures(
        tmp_path, rng
    )
    runner = CliRunner()
    common = ["--t", "50", "--block", "0", "--ensemble", "2", "--seed", "9"]
    prop = ["--temperature", "0.01", "--radius", "2", "--topk", "4", "--context", "2"]
    commands = {
        "eval-spair": ["eval-spair", str(manifest), "--image-root", str(img_root)] + common,
        "eval-willow": ["eval-willow", str(manifest), "--image-root", str(img_root)] + common,
        "eval-cub": ["eval-cub", str(manifest), "--image-root", str(img_root)] + common,
        "tune": ["tune", str(manifest), "--image-root", str(img_root),
                 "--t-candidates", "0,50", "--n-candidates", "0"] + common,
        "eval-hpatches": ["eval-hpatches", str(hp_root), "--run-seed", "4"] + common,
        "eval-davis": ["eval-davis", str(frames), str(anns / "00000.png"),
                       "--annotations", str(anns)] + common + prop,
        "eval-jhmdb": ["eval-jhmdb", str(frames), str(kp_json)] + common + prop,
    }
    ok = True
    details = []
    for name, argv in commands.items():
        payloads = []
        for run in range(2):
            out = tmp_path / f"{name}-{run}.json"
            result = runner.invoke(cli_main, argv + ["--out", str(out)])
            assert result.exit_code == 0, f"{name}: {result.output}"
            payloads.append(out.read_bytes())
        same = payloads[0] == payloads[1]
        ok &= same
        if not same:
            details.append(name)
    report(
        "cli-determinism",
        ok,
        "7 eval commands byte-identical" if ok else f"mismatch: {details}",
    )


# ---------------------------------------------------------------------------
# 9. Full-scale integration (optional, needs GPU + pretrained weights)
# ---------------------------------------------------------------------------

@pytest.mark.skipif(
    "DIFFCORR_SPAIR_ROOT" not in __import__("os").environ,
    reason="full-benchmark integration needs pretrained weights, a GPU, and "
    "the SPair-71k dataset (set DIFFCORR_SPAIR_ROOT to enable)",
)
def test_full_scale_integration_optional():
    import os

    from diffcorr.cli import main as cli
    from diffcorr.presets import load_presets

    runner = CliRunner()
    result = runner.invoke(cli, [
        "eval-spair", os.path.join(os.environ["DIFFCORR_SPAIR_ROOT"], "pairs.jsonl"),
        "--image-root", os.environ["DIFFCORR_SPAIR_ROOT"],
        "--preset", "sd-semantic", "--backend", "sd",
        "--prompt-template", load_presets()["sd-semantic"]["prompt_template"],
    ])
    assert result.exit_code == 0, result.output
