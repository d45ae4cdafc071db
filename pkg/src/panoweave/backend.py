"""Inpainting backends: the deterministic mock used for tests and offline
runs, and the HTTP client for a real diffusion service.

Backend contract: the returned image matches the request's dimensions, and
pixels outside the mask survive (bit-exact for the mock; the HTTP client
tolerates mean absolute drift up to 0.1 before it composites the originals
back in).
"""

from __future__ import annotations

import base64
import binascii
from typing import Optional

import numpy as np
import requests
from scipy import ndimage

from .errors import ContractViolationError, ProtocolError, ServiceError, TransportError
from .guidance import InpaintRequest
from .imagecore import (
    ViewImage,
    image_from_png_bytes,
    image_to_png_bytes,
    mask_to_png_bytes,
)

SIGMA_MOCK = 0.02
REMOTE_KNOWN_TOLERANCE = 0.1


def mock_inpaint(request: InpaintRequest, sigma: float = SIGMA_MOCK) -> ViewImage:
    """Deterministic stand-in for a diffusion backend.

    Fills the masked region by iterated 3x3 averaging outward from known
    pixels, then adds seeded Gaussian noise scaled by sigma * t0 to the
    filled pixels only. Known pixels pass through bit-exact.
    """
    px = request.image.pixels
    h, w = px.shape[:2]
    unknown = request.mask.values >= 0.5
    out = px.copy()
    if not unknown.any():
        return ViewImage(out)

    known = ~unknown
    if known.any():
        ys, xs = np.nonzero(unknown)
        r0, r1 = max(ys.min() - 1, 0), min(ys.max() + 2, h)
        c0, c1 = max(xs.min() - 1, 0), min(xs.max() + 2, w)
        weight = known[r0:r1, c0:c1].astype(np.float64)
        filled = px[r0:r1, c0:c1].astype(np.float64) * weight[..., None]
        while not weight.all():
            wsum = 9.0 * ndimage.uniform_filter(weight, size=3, mode="constant")
            ssum = 9.0 * ndimage.uniform_filter(filled, size=(3, 3, 1), mode="constant")
            newly = (weight == 0.0) & (wsum > 0.0)
            filled[newly] = ssum[newly] / wsum[newly, None]
            weight[newly] = 1.0
        region = unknown[r0:r1, c0:c1]
        patch = out[r0:r1, c0:c1]
        patch[region] = filled[region].astype(np.float32)
        out[r0:r1, c0:c1] = patch
    else:
        out[:] = 0.5

    rng = np.random.default_rng(request.sdedit.seed % 2**64)
    noise = rng.standard_normal(int(unknown.sum())) * sigma * request.sdedit.t0
    out[unknown] = np.clip(out[unknown] + noise[:, None].astype(np.float32), 0.0, 1.0)
    return ViewImage(out)


class MockInpainter:
    """Callable wrapper around mock_inpaint."""

    preserves_known_exactly = True

    def __init__(self, sigma: float = SIGMA_MOCK) -> None:
        self.sigma = sigma

    def __call__(self, request: InpaintRequest) -> ViewImage:
        return mock_inpaint(request, sigma=self.sigma)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def serialize_request(request: InpaintRequest) -> dict:
    """Encode an InpaintRequest as the JSON body of POST /inpaint."""
    body = {
        "image_png_b64": _b64(image_to_png_bytes(request.image)),
        "mask_png_b64": _b64(mask_to_png_bytes(request.mask)),
        "prompt": request.prompt,
        "t0": request.sdedit.t0,
        "guidance_scale": request.sdedit.guidance_scale,
        "variance_scale": request.sdedit.variance_scale,
        "steps": request.sdedit.steps,
        "seed": int(request.sdedit.seed),
    }
    if request.negative_prompt is not None:
        body["negative_prompt"] = request.negative_prompt
    return body


class RemoteInpainter:
    """HTTP client for a diffusion service speaking the /inpaint protocol."""

    preserves_known_exactly = False

    def __init__(self, endpoint: str, timeout: float = 120.0, session: Optional[requests.Session] = None) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def check_health(self) -> None:
        """Raise TransportError unless GET /healthz answers 200."""
        url = f"{self.endpoint}/healthz"
        try:
            resp = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"health check failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"health check returned {resp.status_code}")

    def __call__(self, request: InpaintRequest) -> ViewImage:
        url = f"{self.endpoint}/inpaint"
        try:
            resp = self.session.post(url, json=serialize_request(request), timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"inpaint request failed: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            body = resp.text[:500]
            raise ServiceError(f"backend returned {resp.status_code}: {body}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from exc
        if not isinstance(payload, dict) or "image_png_b64" not in payload:
            raise ProtocolError("response missing image_png_b64")
        try:
            png = base64.b64decode(payload["image_png_b64"], validate=True)
            image = image_from_png_bytes(png)
        except (binascii.Error, ValueError, OSError) as exc:
            raise ProtocolError(f"response image is not a valid PNG: {exc}") from exc

        want_h, want_w = request.image.height, request.image.width
        if image.height != want_h or image.width != want_w:
            raise ProtocolError(
                f"response dimensions {image.width}x{image.height} "
                f"do not match request {want_w}x{want_h}"
            )

        known = request.mask.values < 0.5
        if known.any():
            drift = float(np.abs(image.pixels[known] - request.image.pixels[known]).mean())
            if drift > REMOTE_KNOWN_TOLERANCE:
                raise ContractViolationError(
                    f"backend changed unmasked pixels by {drift:.3f} mean abs "
                    f"(limit {REMOTE_KNOWN_TOLERANCE})"
                )
            # Composite the request's own pixels back so downstream known
            # content is exact regardless of codec round-trips.
            out = image.pixels.copy()
            out[known] = request.image.pixels[known]
            image = ViewImage(out)
        return image
