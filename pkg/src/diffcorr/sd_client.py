"""Denoiser client backed by a pretrained latent diffusion model.

Requires ``torch`` and ``diffusers`` plus downloaded weights; imported
lazily so the rest of the package works without them. The schedule and
block layout are read from the loaded model, never hard-coded.
"""

from __future__ import annotations

import numpy as np

from .backend import BackendError, NoiseSchedule
from .core import ImageRef


class StableDiffusionClient:
    """Latent-diffusion feature client: one conditional U-Net pass, no guidance."""

    backend_id = "sd"

    def __init__(self, model_id: str = "stabilityai/stable-diffusion-2-1", device: str | None = None):
        try:
            import torch
            from diffusers import StableDiffusionPipeline
        except ImportError as exc:
            raise BackendError(
                "the 'sd' backend needs torch and diffusers installed, plus "
                "model weights; install them or use --backend toy"
            ) from exc
        self._torch = torch
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        pipe = StableDiffusionPipeline.from_pretrained(model_id)
        pipe.to(self.device)
        self.vae = pipe.vae
        self.unet = pipe.unet
        self.tokenizer = pipe.tokenizer
        self.text_encoder = pipe.text_encoder
        self._schedule = NoiseSchedule(
            pipe.scheduler.alphas_cumprod.cpu().numpy().astype(np.float64)
        )
        self._prompt_cache: dict[str, object] = {}

    @property
    def schedule(self) -> NoiseSchedule:
        return self._schedule

    @property
    def num_blocks(self) -> int:
        return len(self.unet.up_blocks)

    def encode(self, image: ImageRef) -> np.ndarray:
        torch = self._torch
        arr = image.pixels.astype(np.float32) * 2.0 - 1.0
        x = torch.from_numpy(arr).permute(2, 0, 1)[None].to(self.device)
        with torch.no_grad():
            latent = self.vae.encode(x).latent_dist.mean
            latent = latent * self.vae.config.scaling_factor
        return latent[0].cpu().numpy().astype(np.float64)

    def _embed_prompt(self, prompt: str):
        torch = self._torch
        if prompt not in self._prompt_cache:
            tokens = self.tokenizer(
                prompt,
                padding="max_length",
                max_length=self.tokenizer.model_max_length,
                truncation=True,
                return_tensors="pt",
            ).input_ids.to(self.device)
            with torch.no_grad():
                self._prompt_cache[prompt] = self.text_encoder(tokens)[0]
        return self._prompt_cache[prompt]

    def __call__(self, noisy_input: np.ndarray, t: int, prompt: str):
        torch = self._torch
        x = torch.from_numpy(np.asarray(noisy_input, dtype=np.float32))[None]
        x = x.to(self.device)
        emb = self._embed_prompt(prompt)
        grids: list[np.ndarray] = []
        hooks = [
            block.register_forward_hook(
                lambda mod, args, out: grids.append(
                    out[0].detach().float().cpu().numpy().astype(np.float64)
                )
            )
            for block in self.unet.up_blocks
        ]
        try:
            with torch.no_grad():
                self.unet(
                    x, torch.tensor([t], device=self.device), encoder_hidden_states=emb
                )
        finally:
            for h in hooks:
                h.remove()
        return grids
