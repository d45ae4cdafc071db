"""Cross-view guidance: noising-strength parameters, inpaint request
assembly, guide pasting, and scene priors for new latitude bands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError
from .imagecore import Mask, ViewImage

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class SdeditParams:
    """Noising and sampling settings forwarded to the inpainting backend.

    t0 is the fraction of the diffusion trajectory re-run: 0 returns the
    input untouched, values near 1 regenerate almost from scratch.
    """

    t0: float
    guidance_scale: float = 7.5
    variance_scale: float = 1.0
    steps: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.t0 < 1.0:
            raise ParameterError(f"t0 must be in [0, 1), got {self.t0}")
        if self.guidance_scale < 0.0:
            raise ParameterError("guidance_scale must be >= 0")
        if self.variance_scale <= 0.0:
            raise ParameterError("variance_scale must be > 0")
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if not -(2**63) <= int(self.seed) < 2**63:
            raise ParameterError("seed must fit in 64 bits")


@dataclass
class InpaintRequest:
    """One backend call: the image to complete, the region to fill, and the
    conditioning."""

    image: ViewImage
    mask: Mask
    prompt: str
    sdedit: SdeditParams
    negative_prompt: Optional[str] = None


def paste_guidance(warped: ViewImage, guide: ViewImage, mask: Mask) -> ViewImage:
    """Overwrite the to-inpaint region of a warped view with guide content:
    m * guide + (1 - m) * warped."""
    if warped.pixels.shape != guide.pixels.shape:
        raise DimensionError("warped and guide shapes differ")
    if mask.values.shape != warped.pixels.shape[:2]:
        raise DimensionError("mask shape does not match the view")
    m = mask.values[..., None].astype(np.float32)
    out = m * guide.pixels + (1.0 - m) * warped.pixels
    return ViewImage(out.astype(np.float32))


def extract_prior(initial: ViewImage, fraction: float, target_size: int, direction: str) -> ViewImage:
    """Build a scene-structure guide for a new latitude band from the first
    generated view.

    Crops the top (direction "up") or bottom ("down") fraction of the view
    and resizes it to a square target with bilinear interpolation.
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError("prior fraction must be in (0, 1]")
    if direction not in (UP, DOWN):
        raise ParameterError(f"direction must be '{UP}' or '{DOWN}'")
    rows = int(fraction * initial.height)
    if rows < 1:
        raise ParameterError("prior crop is empty")
    crop = initial.pixels[:rows] if direction == UP else initial.pixels[-rows:]
    return ViewImage(_resize_bilinear(crop, target_size, target_size))


def _resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize aligning pixel centers (half-texel convention)."""
    h, w = pixels.shape[:2]
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    src = pixels.astype(np.float64)
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    return (top * (1.0 - fy) + bot * fy).astype(np.float32)


def build_inpaint_request(
    image: ViewImage,
    mask: Mask,
    prompt: str,
    sdedit: SdeditParams,
    negative_prompt: Optional[str] = None,
) -> InpaintRequest:
    """Validate and assemble an inpaint request."""
    if mask.values.shape != image.pixels.shape[:2]:
        raise DimensionError("mask shape does not match the image")
    if not mask.is_binary():
        raise ParameterError("inpaint mask must be binary")
    if not prompt:
        raise ParameterError("prompt required")
    return InpaintRequest(
        image=image.copy(),
        mask=mask.copy(),
        prompt=prompt,
        sdedit=sdedit,
        negative_prompt=negative_prompt,
    )
