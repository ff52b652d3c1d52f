"""Named configuration presets, loaded from the packaged TOML file."""

from __future__ import annotations

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from importlib import resources

from .backend import ExtractionConfig
from .temporal import PropagationConfig


def load_presets(path: str | None = None) -> dict[str, dict]:
    if path is not None:
        with open(path, "rb") as f:
            return tomllib.load(f)
    data = resources.files("diffcorr").joinpath("presets.toml").read_bytes()
    return tomllib.loads(data.decode())


def preset_names(path: str | None = None) -> list[str]:
    return sorted(load_presets(path))


def extraction_config(
    preset: dict, rng_seed: int = 0, category: str | None = None
) -> ExtractionConfig:
    prompt = preset.get("prompt_template", "")
    if category is not None:
        prompt = prompt.replace("[class]", category)
    return ExtractionConfig(
        t=int(preset["t"]),
        block_index=int(preset["block"]),
        prompt=prompt,
        ensemble_size=int(preset.get("ensemble_size", 8)),
        rng_seed=rng_seed,
    )


def propagation_config(preset: dict) -> PropagationConfig:
    return PropagationConfig(
        temperature=float(preset["temperature"]),
        radius=int(preset["radius"]),
        top_k=int(preset["top_k"]),
        context_frames=int(preset["context_frames"]),
    )
