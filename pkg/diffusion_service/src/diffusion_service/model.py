"""Toy latent inpainting model.

Stands in for a GPU diffusion model while honoring the observable contract:
partial noising to t0, classifier-free guidance between prompt embeddings,
initial-noise variance scaling, seeded deterministic sampling, and decoded
output the caller composites with the request image.

Latent space is a 4x average-pooled copy of the image; the decoder is
bilinear upsampling. The sampler is a DDIM-style deterministic walk on a
cosine schedule a(t) = cos(pi t / 2), s(t) = sin(pi t / 2), where the
denoiser's clean estimate pulls partly toward a prompt-conditioned
attractor. t0 = 0 skips sampling entirely so output differs from input only
by the encode/decode round trip.
"""

from __future__ import annotations

import hashlib

import numpy as np

LATENT_STRIDE = 4


def _embed(text: str) -> np.ndarray:
    """Deterministic 3-channel embedding of a prompt string."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.uniform(-1.0, 1.0, size=3)


def _blur3(lat: np.ndarray) -> np.ndarray:
    p = np.pad(lat, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(lat)
    for dy in range(3):
        for dx in range(3):
            out += p[dy : dy + lat.shape[0], dx : dx + lat.shape[1]]
    return out / 9.0


def encode(image: np.ndarray) -> np.ndarray:
    """Average-pool the image into the latent grid, edge-padding to a
    multiple of the stride."""
    h, w = image.shape[:2]
    pad_h = (-h) % LATENT_STRIDE
    pad_w = (-w) % LATENT_STRIDE
    arr = np.pad(image.astype(np.float64), ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    h4 = arr.shape[0] // LATENT_STRIDE
    w4 = arr.shape[1] // LATENT_STRIDE
    return arr.reshape(h4, LATENT_STRIDE, w4, LATENT_STRIDE, 3).mean(axis=(1, 3))


def decode(latent: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample back to pixel resolution, cropped to the original
    size."""
    h4, w4 = latent.shape[:2]
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) / LATENT_STRIDE - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) / LATENT_STRIDE - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    fy = (ys - y0f)[:, None, None]
    fx = (xs - x0f)[None, :, None]
    y0 = np.clip(y0f.astype(np.int64), 0, h4 - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h4 - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, w4 - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w4 - 1)
    top = latent[y0][:, x0] * (1.0 - fx) + latent[y0][:, x1] * fx
    bot = latent[y1][:, x0] * (1.0 - fx) + latent[y1][:, x1] * fx
    return top * (1.0 - fy) + bot * fy


class ToyLatentModel:
    """Deterministic inpainting model over the toy latent space."""

    def __init__(self, model_id: str = "toy-latent-v1", device: str = "cpu") -> None:
        self.model_id = model_id
        self.device = device

    def inpaint(
        self,
        image: np.ndarray,
        prompt: str,
        negative_prompt: str,
        t0: float,
        guidance_scale: float,
        variance_scale: float,
        steps: int,
        seed: int,
    ) -> np.ndarray:
        """Full-frame edit of the guide image; the caller composites known
        pixels afterwards. Bit-deterministic for identical arguments."""
        h, w = image.shape[:2]
        z0 = encode(image)
        if t0 <= 0.0:
            return np.clip(decode(z0, h, w), 0.0, 1.0).astype(np.float32)

        e_cond = _embed(prompt)
        e_unc = _embed(negative_prompt)
        e = e_unc + guidance_scale * (e_cond - e_unc)
        attractor = np.clip(0.75 * _blur3(z0) + 0.25 * (0.5 + 0.2 * e[None, None, :]), 0.0, 1.0)

        rng = np.random.default_rng(seed % 2**64)
        eps = rng.standard_normal(z0.shape) * np.sqrt(variance_scale)
        ts = np.linspace(t0, 0.0, steps + 1)
        a = np.cos(np.pi * ts / 2.0)
        s = np.sin(np.pi * ts / 2.0)
        z = a[0] * z0 + s[0] * eps
        for k in range(steps):
            # Clean estimate: interpolates the current sample and the
            # attractor; exact at t = 0, pure attractor at t = 1.
            z0_hat = a[k] * z + (1.0 - a[k] ** 2) * attractor
            eps_hat = (z - a[k] * z0_hat) / s[k]
            z = a[k + 1] * z0_hat + s[k + 1] * eps_hat
        return np.clip(decode(z, h, w), 0.0, 1.0).astype(np.float32)
