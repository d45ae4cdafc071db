"""One real-socket round trip to prove the app serves over HTTP, not just
through the ASGI test client."""

from __future__ import annotations

import base64
import io
import threading
import time

import httpx
import numpy as np
import pytest
import uvicorn
from PIL import Image

from diffusion_service.app import create_app
from diffusion_service.config import ServiceConfig


@pytest.fixture(scope="module")
def server_url():
    server = uvicorn.Server(
        uvicorn.Config(create_app(ServiceConfig()), host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10.0)


def test_healthz_over_the_wire(server_url: str) -> None:
    resp = httpx.get(f"{server_url}/healthz", timeout=10.0)
    assert resp.status_code == 200


def test_inpaint_over_the_wire(server_url: str) -> None:
    size = 32
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[:, :, 0] = np.linspace(40, 200, size, dtype=np.uint8)[None, :]
    img[:, :, 1] = 120
    img[:, :, 2] = np.linspace(200, 40, size, dtype=np.uint8)[:, None]
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[size // 2 :, :] = 255

    def png_b64(arr, mode):
        buf = io.BytesIO()
        Image.fromarray(arr, mode).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    body = {
        "image_png_b64": png_b64(img, "RGB"),
        "mask_png_b64": png_b64(mask, "L"),
        "prompt": "a pier",
        "t0": 0.8,
        "guidance_scale": 2.0,
        "variance_scale": 1.0,
        "steps": 10,
        "seed": 9,
    }
    resp = httpx.post(f"{server_url}/inpaint", json=body, timeout=30.0)
    assert resp.status_code == 200
    out = np.asarray(
        Image.open(io.BytesIO(base64.b64decode(resp.json()["image_png_b64"]))).convert("RGB")
    )
    assert out.shape == (size, size, 3)
    known = mask == 0
    assert np.abs(out.astype(np.int32) - img.astype(np.int32))[known].max() <= 1
