"""Feature extraction from a denoising U-Net, plus an offline toy backend.

The extraction recipe: forward-noise a real image to time step t, run the
denoiser once, and read off one upsampling block's activation grid. Features
are averaged over an ensemble of independent noise draws. The toy backend
implements the same client interface with a deterministic, weight-free
descriptor so every downstream module is testable without model weights.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import FeatureMap, ImageRef


class BackendError(RuntimeError):
    """Raised when a denoiser client fails during extraction."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention schedule: alpha_bar[t] in (0, 1], decreasing."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 1:
            raise ValueError("alpha_bar must be a non-empty 1D sequence")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar entries must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def num_steps(self) -> int:
        return int(self.alpha_bar.size)


def linear_beta_schedule(
    num_steps: int = 1000, beta_start: float = 1e-8, beta_end: float = 0.02
) -> NoiseSchedule:
    """Linearly spaced per-step variances, accumulated to alpha_bar."""
    betas = np.linspace(beta_start, beta_end, num_steps)
    return NoiseSchedule(np.cumprod(1.0 - betas))


@dataclass(frozen=True)
class ExtractionConfig:
    """Where and how to read features: time step, block, prompt, ensemble."""

    t: int
    block_index: int
    prompt: str = ""
    ensemble_size: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"time step must be >= 0, got {self.t}")
        if self.block_index < 0:
            raise ValueError(f"block index must be >= 0, got {self.block_index}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble size must be >= 1, got {self.ensemble_size}")

    def as_dict(self) -> dict:
        return asdict(self)


@runtime_checkable
class DenoiserClient(Protocol):
    """Deterministic denoiser wrapper: all randomness lives in the noise draw."""

    backend_id: str

    @property
    def schedule(self) -> NoiseSchedule: ...

    @property
    def num_blocks(self) -> int: ...

    def encode(self, image: ImageRef) -> np.ndarray: ...

    def __call__(
        self, noisy_input: np.ndarray, t: int, prompt: str
    ) -> Sequence[np.ndarray]: ...


def add_noise(
    x0: np.ndarray, t: int, epsilon: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Mix clean signal with noise: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if x0.shape != epsilon.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {epsilon.shape}")
    if not 0 <= t < schedule.num_steps:
        raise ValueError(f"time step {t} outside [0, {schedule.num_steps})")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * epsilon


def _draw_noise(shape: tuple, rng_seed: int, draw_index: int) -> np.ndarray:
    """Per-draw noise, reproducible and independent of draw order."""
    seq = np.random.SeedSequence(entropy=rng_seed, spawn_key=(draw_index,))
    return np.random.default_rng(seq).standard_normal(shape)


def single_draw_feature(
    image: ImageRef, client: DenoiserClient, cfg: ExtractionConfig, draw_index: int
) -> np.ndarray:
    """One ensemble member: noise the image with the draw's seed, run the client."""
    x0 = client.encode(image)
    eps = _draw_noise(x0.shape, cfg.rng_seed, draw_index)
    xt = add_noise(x0, cfg.t, eps, client.schedule)
    try:
        grids = client(xt, cfg.t, cfg.prompt)
    except Exception as exc:  # surfaced with the failing draw index
        raise BackendError(f"denoiser client failed on draw {draw_index}: {exc}") from exc
    if not 0 <= cfg.block_index < len(grids):
        raise ValueError(
            f"block index {cfg.block_index} out of range for client with "
            f"{len(grids)} blocks"
        )
    return np.asarray(grids[cfg.block_index], dtype=np.float64)


def extract_features(
    image: ImageRef, client: DenoiserClient, cfg: ExtractionConfig
) -> FeatureMap:
    """Noise-ensemble-averaged activation grid from the chosen block."""
    if not 0 <= cfg.t < client.schedule.num_steps:
        raise ValueError(f"time step {cfg.t} invalid for schedule")
    acc = None
    for d in range(cfg.ensemble_size):
        grid = single_draw_feature(image, client, cfg, d)
        acc = grid if acc is None else acc + grid
    mean = acc / cfg.ensemble_size
    meta = {"backend": client.backend_id, "config": cfg.as_dict()}
    return FeatureMap(mean, image.height_px, image.width_px, meta)


# ---------------------------------------------------------------------------
# Toy backend
# ---------------------------------------------------------------------------

_POS_WEIGHT = 0.05


def _positional_encoding(h: int, w: int) -> np.ndarray:
    """Fixed per-cell code, distinct at every cell (contains u, v directly)."""
    v, u = np.meshgrid(
        (np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij"
    )
    enc = np.stack(
        [
            u,
            v,
            np.sin(2 * np.pi * u),
            np.cos(2 * np.pi * u),
            np.sin(2 * np.pi * v),
            np.cos(2 * np.pi * v),
            np.sin(2 * np.pi * (u + v)),
            np.cos(2 * np.pi * (u - v)),
        ]
    )
    return _POS_WEIGHT * enc


def _cell_means(img: np.ndarray, s: int) -> np.ndarray:
    """Mean over s x s blocks, ragged edge blocks included. img: (..., H, W)."""
    H, W = img.shape[-2:]
    h = -(-H // s)
    w = -(-W // s)
    out = np.empty(img.shape[:-2] + (h, w))
    for i in range(h):
        for j in range(w):
            out[..., i, j] = img[
                ..., i * s : min((i + 1) * s, H), j * s : min((j + 1) * s, W)
            ].mean(axis=(-2, -1))
    return out


def _toy_descriptor(pixels: np.ndarray, block_index: int) -> np.ndarray:
    """Linear multi-scale descriptor grid for one block scale.

    Linearity in the input is load-bearing: it makes the noised descriptor
    decompose into signal and noise parts, so ensemble averaging converges to
    the noise-free descriptor.
    """
    s = 2 ** (block_index + 1)
    color = _cell_means(np.moveaxis(pixels, -1, 0), s)  # (3, h, w)
    gray = pixels.mean(axis=-1)
    dx = np.diff(gray, axis=1, append=gray[:, -1:])
    dy = np.diff(gray, axis=0, append=gray[-1:, :])
    grads = _cell_means(np.stack([dx, dy]), s)  # (2, h, w)
    h, w = color.shape[1:]
    # 3x3 neighborhood of cell colors (border-clamped) for distinctiveness.
    neigh = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii = np.clip(np.arange(h) + di, 0, h - 1)
            jj = np.clip(np.arange(w) + dj, 0, w - 1)
            neigh.append(color[:, ii[:, None], jj[None, :]])
    return np.concatenate(neigh + [grads], axis=0)  # (29, h, w)


class ToyDenoiserClient:
    """Weight-free stand-in for a real denoiser, same interface and ensembling.

    Activations are a linear descriptor of the (noisy) input plus a fixed
    positional code, at four dyadic scales (block n downsamples by 2^(n+1)).
    """

    backend_id = "toy"

    def __init__(self, schedule: NoiseSchedule | None = None):
        self._schedule = schedule if schedule is not None else linear_beta_schedule()

    @property
    def schedule(self) -> NoiseSchedule:
        return self._schedule

    @property
    def num_blocks(self) -> int:
        return 4

    def encode(self, image: ImageRef) -> np.ndarray:
        return np.asarray(image.pixels, dtype=np.float64)

    def __call__(self, noisy_input, t, prompt):
        grids = []
        for n in range(self.num_blocks):
            desc = _toy_descriptor(noisy_input, n)
            pos = _positional_encoding(desc.shape[1], desc.shape[2])
            grids.append(np.concatenate([desc, pos], axis=0))
        return grids


def toy_extract(
    image: ImageRef, cfg: ExtractionConfig, schedule: NoiseSchedule | None = None
) -> FeatureMap:
    """Deterministic descriptor extraction through the standard ensembling path."""
    return extract_features(image, ToyDenoiserClient(schedule), cfg)


def toy_noise_free(
    image: ImageRef, cfg: ExtractionConfig, schedule: NoiseSchedule | None = None
) -> np.ndarray:
    """The infinite-ensemble limit of :func:`toy_extract` (float64 grid)."""
    client = ToyDenoiserClient(schedule)
    ab = client.schedule.alpha_bar[cfg.t]
    desc = _toy_descriptor(client.encode(image), cfg.block_index)
    pos = _positional_encoding(desc.shape[1], desc.shape[2])
    return np.concatenate([np.sqrt(ab) * desc, pos], axis=0)


# ---------------------------------------------------------------------------
# Feature cache
# ---------------------------------------------------------------------------

_MAGIC = b"DIFT"
_VERSION = 1


@dataclass(frozen=True)
class FeatureCacheEntry:
    key: str
    value: FeatureMap
    created_at: float


def cache_key(image_id: str, backend_id: str, cfg: ExtractionConfig) -> str:
    payload = json.dumps(
        {"image": image_id, "backend": backend_id, "config": cfg.as_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def write_feature_file(path: str, fmap: FeatureMap) -> None:
    """Binary layout: magic, version u16, C/h/w u32, float32 data, JSON blob.

    All integers little-endian; the metadata blob is u32-length-prefixed UTF-8.
    """
    meta = dict(fmap.meta)
    meta["source_height_px"] = fmap.source_height_px
    meta["source_width_px"] = fmap.source_width_px
    blob = json.dumps(meta, sort_keys=True).encode()
    c, h, w = fmap.data.shape
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(np.array([_VERSION], dtype="<u2").tobytes())
        f.write(np.array([c, h, w], dtype="<u4").tobytes())
        f.write(fmap.data.astype("<f4").tobytes())
        f.write(np.array([len(blob)], dtype="<u4").tobytes())
        f.write(blob)
    os.replace(tmp, path)


def read_feature_file(path: str) -> FeatureMap:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: bad magic")
        version = int(np.frombuffer(f.read(2), dtype="<u2")[0])
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        c, h, w = (int(v) for v in np.frombuffer(f.read(12), dtype="<u4"))
        data = np.frombuffer(f.read(4 * c * h * w), dtype="<f4").reshape(c, h, w)
        blob_len = int(np.frombuffer(f.read(4), dtype="<u4")[0])
        meta = json.loads(f.read(blob_len).decode())
    src_h = meta.pop("source_height_px")
    src_w = meta.pop("source_width_px")
    return FeatureMap(data, src_h, src_w, meta)


class FeatureCache:
    """Directory-backed feature store; writes are atomic (tmp + rename)."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def _path(self, key: str) -> str:
        return os.path.join(self.root, key + ".dift")

    def get(self, key: str) -> FeatureMap | None:
        path = self._path(key)
        if not os.path.exists(path):
            return None
        return read_feature_file(path)

    def put(self, key: str, fmap: FeatureMap) -> FeatureCacheEntry:
        write_feature_file(self._path(key), fmap)
        return FeatureCacheEntry(key, fmap, time.time())


class FeatureExtractor:
    """Cache-aware front door: extract through a client, memoize on disk."""

    def __init__(self, client: DenoiserClient, cache: FeatureCache | None = None):
        self.client = client
        self.cache = cache

    def __call__(self, image: ImageRef, cfg: ExtractionConfig) -> FeatureMap:
        if self.cache is None:
            return extract_features(image, self.client, cfg)
        key = cache_key(image.id, self.client.backend_id, cfg)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        fmap = extract_features(image, self.client, cfg)
        # Stored as float32; re-read so cold and warm paths are bit-identical.
        self.cache.put(key, fmap)
        return self.cache.get(key)
