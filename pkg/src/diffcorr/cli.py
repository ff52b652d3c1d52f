"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 backend error. Every eval
subcommand emits a deterministic JSON report (no timestamps) plus a
human-readable table.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace

import click

from . import presets as presets_mod
from .backend import (
    BackendError,
    ExtractionConfig,
    FeatureCache,
    FeatureExtractor,
    ToyDenoiserClient,
    write_feature_file,
)
from .core import Point2D
from .harness import ImageStore, run_hpatches, run_keypoint_tracking, run_video_segmentation
from .imageio import load_image
from .matching import best_match
from .semantic import (
    DEFAULT_T_GRID,
    evaluate_dataset,
    grid_search,
    load_manifest,
)
from .temporal import PropagationConfig

EXIT_VALIDATION = 2
EXIT_BACKEND = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BackendError as exc:
            _fail(EXIT_BACKEND, str(exc))
        except (ValueError, OSError) as exc:
            _fail(EXIT_VALIDATION, str(exc))

    return wrapper


def build_extractor(backend: str, cache_dir: str | None) -> FeatureExtractor:
    cache = FeatureCache(cache_dir) if cache_dir else None
    if backend == "toy":
        return FeatureExtractor(ToyDenoiserClient(), cache)
    if backend == "sd":
        from .sd_client import StableDiffusionClient

        return FeatureExtractor(StableDiffusionClient(), cache)
    raise BackendError(f"unknown backend {backend!r}")


def config_options(fn):
    fn = click.option("--preset", default=None, help="Named preset from presets.toml.")(fn)
    fn = click.option("--t", "t_step", type=int, default=None, help="Diffusion time step.")(fn)
    fn = click.option("--block", type=int, default=None, help="Upsampling block index.")(fn)
    fn = click.option("--prompt", default=None, help="Conditioning prompt.")(fn)
    fn = click.option("--ensemble", type=int, default=None, help="Noise ensemble size.")(fn)
    fn = click.option("--seed", type=int, default=0, help="Extraction RNG seed.")(fn)
    fn = click.option("--backend", default="toy", show_default=True, help="toy or sd.")(fn)
    fn = click.option("--cache-dir", envvar="DIFT_CACHE_DIR", default=None)(fn)
    return fn


def resolve_config(preset, t_step, block, prompt, ensemble, seed) -> ExtractionConfig:
    if preset is not None:
        presets = presets_mod.load_presets()
        if preset not in presets:
            raise ValueError(f"unknown preset {preset!r}")
        cfg = presets_mod.extraction_config(presets[preset], rng_seed=seed)
    else:
        cfg = ExtractionConfig(t=0, block_index=0, ensemble_size=1, rng_seed=seed)
    if t_step is not None:
        cfg = replace(cfg, t=t_step)
    if block is not None:
        cfg = replace(cfg, block_index=block)
    if prompt is not None:
        cfg = replace(cfg, prompt=prompt)
    if ensemble is not None:
        cfg = replace(cfg, ensemble_size=ensemble)
    return cfg


def emit_report(report: dict, out: str | None):
    payload = json.dumps(report, sort_keys=True, indent=2)
    if out:
        with open(out, "w") as f:
            f.write(payload + "\n")
    else:
        click.echo(payload)


@click.group()
def main():
    """Dense correspondence from diffusion features."""


@main.command()
@click.argument("image_path")
@click.option("-o", "--out", required=True, help="Output feature file (.dift).")
@config_options
@guarded
def extract(image_path, out, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """Extract a feature map from one image."""
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    extractor = build_extractor(backend, cache_dir)
    fmap = extractor(load_image(image_path), cfg)
    write_feature_file(out, fmap)
    click.echo(
        f"wrote {out}: {fmap.channels}x{fmap.grid_height}x{fmap.grid_width} "
        f"for {fmap.source_height_px}x{fmap.source_width_px} image"
    )


@main.command()
@click.argument("source_path")
@click.argument("target_path")
@click.option("--point", required=True, help="Query point as X,Y in source pixels.")
@click.option("--out", default=None, help="Write the match JSON here.")
@config_options
@guarded
def match(source_path, target_path, point, out, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """Find the best match for one source point in the target image."""
    try:
        x, y = (float(v) for v in point.split(","))
    except ValueError:
        raise ValueError(f"--point must be X,Y, got {point!r}")
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    extractor = build_extractor(backend, cache_dir)
    f_src = extractor(load_image(source_path), cfg)
    f_tgt = extractor(load_image(target_path), cfg)
    result, _ = best_match(f_src, Point2D(x, y), f_tgt)
    emit_report(
        {
            "source_point": [result.source_point.x, result.source_point.y],
            "target_point": [result.target_point.x, result.target_point.y],
            "similarity": result.similarity,
        },
        out,
    )


def _pck_eval_command(name: str, default_alpha: float, default_norm: str, default_agg: str):
    @main.command(name=name)
    @click.argument("manifest")
    @click.option("--image-root", required=True)
    @click.option("--alpha", type=float, default=default_alpha, show_default=True)
    @click.option("--norm", type=click.Choice(["img", "bbox"]), default=default_norm, show_default=True)
    @click.option("--agg", type=click.Choice(["point", "image"]), default=default_agg, show_default=True)
    @click.option("--prompt-template", default=None)
    @click.option("--out", default=None)
    @config_options
    @guarded
    def cmd(manifest, image_root, alpha, norm, agg, prompt_template, out, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
        cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
        extractor = build_extractor(backend, cache_dir)
        pairs = load_manifest(manifest)
        report = evaluate_dataset(
            extractor,
            pairs,
            ImageStore(image_root),
            cfg,
            alpha=alpha,
            norm={"img": "image", "bbox": "bbox"}[norm],
            aggregation={"point": "per_point", "image": "per_image"}[agg],
            prompt_template=prompt_template,
        )
        click.echo(f"PCK@alpha={alpha} ({report.norm}, {report.aggregation})")
        for cat, v in report.per_category.items():
            click.echo(f"  {cat:<20s} {100 * v:6.1f}")
        click.echo(f"  {'Mean':<20s} {100 * report.category_mean:6.1f}")
        click.echo(f"  {'All':<20s} {100 * report.overall:6.1f}")
        emit_report(
            {
                "alpha": report.alpha,
                "norm": report.norm,
                "aggregation": report.aggregation,
                "per_category": report.per_category,
                "category_mean": report.category_mean,
                "overall": report.overall,
                "skipped": report.skipped,
                "config": cfg.as_dict(),
            },
            out,
        )

    cmd.__name__ = name.replace("-", "_")
    return cmd


eval_spair = _pck_eval_command("eval-spair", 0.1, "bbox", "image")
eval_willow = _pck_eval_command("eval-willow", 0.1, "bbox", "image")
eval_cub = _pck_eval_command("eval-cub", 0.1, "img", "point")


@main.command(name="eval-hpatches")
@click.argument("root")
@click.option("--epsilons", default="1,3,5", show_default=True)
@click.option("--threshold", type=float, default=3.0, show_default=True)
@click.option("--iters", type=int, default=2000, show_default=True)
@click.option("--run-seed", type=int, default=0, show_default=True)
@click.option("--max-keypoints", type=int, default=1000, show_default=True)
@click.option("--out", default=None)
@config_options
@guarded
def eval_hpatches(root, epsilons, threshold, iters, run_seed, max_keypoints, out, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """Homography-estimation accuracy over an HPatches-style directory."""
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    extractor = build_extractor(backend, cache_dir)
    eps = [float(e) for e in epsilons.split(",")]
    report = run_hpatches(
        extractor, root, cfg, eps, threshold, iters, run_seed, max_keypoints
    )
    click.echo(f"pairs={report['pairs']} failures={report['failures']}")
    for label, accs in [("overall", report["accuracy"])] + sorted(
        report["by_change_type"].items()
    ):
        row = "  ".join(f"eps={e}: {100 * v:5.1f}" for e, v in sorted(accs.items(), key=lambda kv: float(kv[0])))
        click.echo(f"  {label:<14s} {row}")
    report["config"] = cfg.as_dict()
    emit_report(report, out)


def _propagation_options(fn):
    fn = click.option("--temperature", type=float, default=None)(fn)
    fn = click.option("--radius", type=int, default=None)(fn)
    fn = click.option("--topk", type=int, default=None)(fn)
    fn = click.option("--context", type=int, default=None)(fn)
    return fn


def _resolve_prop_config(preset, temperature, radius, topk, context) -> PropagationConfig:
    base = {"temperature": 0.1, "radius": 5, "top_k": 10, "context_frames": 8}
    if preset is not None:
        presets = presets_mod.load_presets()
        p = presets.get(preset, {})
        if "temperature" in p:
            base = {
                "temperature": p["temperature"],
                "radius": p["radius"],
                "top_k": p["top_k"],
                "context_frames": p["context_frames"],
            }
    if temperature is not None:
        base["temperature"] = temperature
    if radius is not None:
        base["radius"] = radius
    if topk is not None:
        base["top_k"] = topk
    if context is not None:
        base["context_frames"] = context
    return PropagationConfig(**base)


@main.command(name="eval-davis")
@click.argument("frames_dir")
@click.argument("first_mask")
@click.option("--annotations", default=None, help="Per-frame label images for J&F.")
@click.option("--out", default=None)
@_propagation_options
@config_options
@guarded
def eval_davis(frames_dir, first_mask, annotations, out, temperature, radius, topk, context, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """Video object segmentation by label propagation."""
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    prop_cfg = _resolve_prop_config(preset, temperature, radius, topk, context)
    extractor = build_extractor(backend, cache_dir)
    report = run_video_segmentation(
        extractor, frames_dir, first_mask, cfg, prop_cfg, annotations
    )
    if "metrics" in report:
        m = report["metrics"]
        click.echo(
            f"J&F={100 * m['JF_mean']:.1f}  J={100 * m['J_mean']:.1f}  "
            f"F={100 * m['F_mean']:.1f}  ({report['frames']} frames)"
        )
    else:
        click.echo(f"propagated {report['frames']} frames (no annotations given)")
    report["config"] = cfg.as_dict()
    emit_report(report, out)


@main.command(name="eval-jhmdb")
@click.argument("frames_dir")
@click.argument("keypoints_json")
@click.option("--norm", type=click.Choice(["bbox", "img"]), default="bbox", show_default=True)
@click.option("--out", default=None)
@_propagation_options
@config_options
@guarded
def eval_jhmdb(frames_dir, keypoints_json, norm, out, temperature, radius, topk, context, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """Pose keypoint tracking by label propagation."""
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    prop_cfg = _resolve_prop_config(preset, temperature, radius, topk, context)
    extractor = build_extractor(backend, cache_dir)
    report = run_keypoint_tracking(
        extractor,
        frames_dir,
        keypoints_json,
        cfg,
        prop_cfg,
        norm={"img": "image", "bbox": "bbox"}[norm],
    )
    pck_row = "  ".join(f"PCK@{a}: {100 * v:5.1f}" for a, v in sorted(report["pck"].items()))
    click.echo(f"{report['frames']} frames, {report['keypoints']} keypoints  {pck_row}")
    report["config"] = cfg.as_dict()
    emit_report(report, out)


@main.command()
@click.argument("manifest")
@click.option("--image-root", required=True)
@click.option("--t-candidates", default=",".join(str(t) for t in DEFAULT_T_GRID), show_default=True)
@click.option("--n-candidates", default="0,1,2,3", show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--norm", type=click.Choice(["img", "bbox"]), default="bbox", show_default=True)
@click.option("--agg", type=click.Choice(["point", "image"]), default="image", show_default=True)
@click.option("--prompt-template", default=None)
@click.option("--out", default=None)
@config_options
@guarded
def tune(manifest, image_root, t_candidates, n_candidates, alpha, norm, agg, prompt_template, out, preset, t_step, block, prompt, ensemble, seed, backend, cache_dir):
    """2D grid search over (time step, block index) on a tuning set."""
    cfg = resolve_config(preset, t_step, block, prompt, ensemble, seed)
    extractor = build_extractor(backend, cache_dir)
    pairs = load_manifest(manifest)
    ts = [int(v) for v in t_candidates.split(",")]
    ns = [int(v) for v in n_candidates.split(",")]
    best, grid = grid_search(
        extractor,
        pairs,
        ImageStore(image_root),
        cfg,
        ts,
        ns,
        alpha=alpha,
        norm={"img": "image", "bbox": "bbox"}[norm],
        aggregation={"point": "per_point", "image": "per_image"}[agg],
        prompt_template=prompt_template,
    )
    click.echo(f"best: t={best[0]} block={best[1]} pck={100 * grid[best]:.1f}")
    for (t, n), v in sorted(grid.items()):
        click.echo(f"  t={t:<4d} n={n:<2d} {100 * v:6.1f}")
    emit_report(
        {
            "best": {"t": best[0], "block": best[1]},
            "grid": [
                {"t": t, "block": n, "pck": v} for (t, n), v in sorted(grid.items())
            ],
        },
        out,
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--backend", default="toy", show_default=True)
@click.option("--cache-dir", envvar="DIFT_CACHE_DIR", default=None)
@guarded
def serve(host, port, backend, cache_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(build_extractor(backend, cache_dir))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
