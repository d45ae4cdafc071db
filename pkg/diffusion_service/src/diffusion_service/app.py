"""HTTP wiring for the inpainting service.

Error responses are always {"error": message} with the offending field named
in the message; framework-default validation shapes never leak, so the body
is parsed by hand instead of through a request model.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image
from starlette.concurrency import run_in_threadpool

from .config import ServiceConfig
from .model import ToyLatentModel

_FIELDS = "image_png_b64, mask_png_b64, prompt, t0, guidance_scale, variance_scale, steps, seed"


class RequestError(Exception):
    def __init__(self, message: str, status: int = 400) -> None:
        super().__init__(message)
        self.status = status


def _require_str(body: dict, name: str) -> str:
    if name not in body:
        raise RequestError(f"missing field {name}")
    value = body[name]
    if not isinstance(value, str):
        raise RequestError(f"field {name} must be a string")
    return value


def _require_number(body: dict, name: str) -> float:
    if name not in body:
        raise RequestError(f"missing field {name}")
    value = body[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RequestError(f"field {name} must be a number")
    return float(value)


def _require_int(body: dict, name: str) -> int:
    if name not in body:
        raise RequestError(f"missing field {name}")
    value = body[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise RequestError(f"field {name} must be an integer")
    return value


def _decode_png(body: dict, name: str, mode: str) -> np.ndarray:
    text = _require_str(body, name)
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise RequestError(f"field {name} is not valid base64")
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception:
        raise RequestError(f"field {name} is not a decodable PNG")
    return np.asarray(img.convert(mode), dtype=np.float64) / 255.0


def _parse(body: object, max_side: int) -> dict:
    if not isinstance(body, dict):
        raise RequestError(f"request body must be a JSON object with fields {_FIELDS}")
    image = _decode_png(body, "image_png_b64", "RGB")
    mask = _decode_png(body, "mask_png_b64", "L")
    if mask.shape != image.shape[:2]:
        raise RequestError("field mask_png_b64 dimensions must match image_png_b64")
    if max(image.shape[:2]) > max_side:
        raise RequestError(f"image exceeds the maximum resolution of {max_side} px", status=413)

    prompt = _require_str(body, "prompt")
    negative = ""
    if "negative_prompt" in body and body["negative_prompt"] is not None:
        negative = _require_str(body, "negative_prompt")
    t0 = _require_number(body, "t0")
    if not 0.0 <= t0 < 1.0:
        raise RequestError("field t0 must be in [0, 1)")
    guidance = _require_number(body, "guidance_scale")
    if guidance < 0.0:
        raise RequestError("field guidance_scale must be >= 0")
    variance = _require_number(body, "variance_scale")
    if variance <= 0.0:
        raise RequestError("field variance_scale must be > 0")
    steps = _require_int(body, "steps")
    if steps < 1:
        raise RequestError("field steps must be >= 1")
    seed = _require_int(body, "seed")
    if seed < 0:
        raise RequestError("field seed must be >= 0")
    return {
        "image": image,
        "mask": (mask >= 0.5).astype(np.float64),
        "prompt": prompt,
        "negative_prompt": negative,
        "t0": t0,
        "guidance_scale": guidance,
        "variance_scale": variance,
        "steps": steps,
        "seed": seed,
    }


def _encode_png(pixels: np.ndarray) -> str:
    u8 = np.clip(np.round(pixels * 255.0), 0.0, 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.model = ToyLatentModel(config.model_id, config.device)
    app.state.gate = threading.BoundedSemaphore(config.max_concurrent)

    @app.get("/healthz")
    async def healthz() -> JSONResponse:
        if app.state.model is None:
            return JSONResponse({"error": "model not loaded"}, status_code=503)
        return JSONResponse({"status": "ok", "model": app.state.config.model_id})

    @app.post("/inpaint")
    async def inpaint(request: Request) -> JSONResponse:
        raw = await request.body()
        try:
            body = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return JSONResponse(
                {"error": f"request body is not valid JSON; expected an object with fields {_FIELDS}"},
                status_code=400,
            )
        try:
            job = _parse(body, app.state.config.max_side)
        except RequestError as exc:
            return JSONResponse({"error": str(exc)}, status_code=exc.status)

        def work() -> np.ndarray:
            with app.state.gate:
                return app.state.model.inpaint(
                    job["image"],
                    job["prompt"],
                    job["negative_prompt"],
                    job["t0"],
                    job["guidance_scale"],
                    job["variance_scale"],
                    job["steps"],
                    job["seed"],
                )

        try:
            edited = await run_in_threadpool(work)
        except Exception as exc:
            return JSONResponse({"error": f"inpainting failed: {exc}"}, status_code=500)

        m = job["mask"][:, :, None]
        composite = job["image"] * (1.0 - m) + edited.astype(np.float64) * m
        return JSONResponse({"image_png_b64": _encode_png(composite)})

    return app
