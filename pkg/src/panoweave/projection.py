"""Warps between views and the panorama: planar shifts, sphere rendering,
canvas commits, and view-to-view rotation warps.

All warps use inverse mapping with bilinear sampling and report a validity
mask; no splatting anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, UnsupportedKindError
from .imagecore import EQUIRECT, CameraPose, Mask, PanoCanvas, ViewImage

FIRST_WRITE_WINS = "first-write-wins"
OVERWRITE = "overwrite"

# Small enough that per-chunk float64 scratch stays well under the canvas
# buffer's own footprint.
_COMMIT_ROW_CHUNK = 64


@dataclass
class WarpResult:
    """A warped image plus the mask of pixels with no source content."""

    image: ViewImage
    unknown: Mask


def _basis(pose: CameraPose):
    """Forward/right/up unit vectors of a roll-free camera, world y-up."""
    pitch = math.radians(pose.pitch)
    yaw = math.radians(pose.yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    forward = np.array([cp * sy, sp, cp * cy], dtype=np.float64)
    right = np.array([cy, 0.0, -sy], dtype=np.float64)
    up = np.array([-sp * sy, cp, -sp * cy], dtype=np.float64)
    return forward, right, up


def _ndc_grid(size: int, fov_deg: float):
    """Per-pixel-center image-plane coordinates (u right, v up) at unit depth."""
    half = math.tan(math.radians(fov_deg) / 2.0)
    xs = np.arange(size, dtype=np.float64)
    u = (2.0 * (xs + 0.5) / size - 1.0) * half
    v = (1.0 - 2.0 * (xs + 0.5) / size) * half
    return np.meshgrid(u, v)  # (U over columns, V over rows)


def _sample_bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear sample of (H, W, C) at float coords; taps clamp to borders."""
    h, w = arr.shape[:2]
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    top = arr[y0i, x0i] * (1.0 - fx) + arr[y0i, x1i] * fx
    bot = arr[y1i, x0i] * (1.0 - fx) + arr[y1i, x1i] * fx
    return top * (1.0 - fy) + bot * fy


def _shift_resample(arr: np.ndarray, dx: float):
    """Translate (H, W, C) content by dx columns; valid where the source
    column stays inside [0, W-1]."""
    h, w = arr.shape[:2]
    if float(dx).is_integer():
        d = int(dx)
        out = np.zeros_like(arr)
        valid = np.zeros((h, w), dtype=bool)
        if d >= 0:
            keep = w - d
            if keep > 0:
                out[:, :keep] = arr[:, d:]
                valid[:, :keep] = True
        else:
            keep = w + d
            if keep > 0:
                out[:, -keep:] = arr[:, :keep]
                valid[:, -keep:] = True
        return out, valid
    xs = np.arange(w, dtype=np.float64) + dx
    valid_cols = (xs >= 0.0) & (xs <= w - 1.0)
    xs_grid = np.broadcast_to(xs, (h, w))
    ys_grid = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w))
    out = _sample_bilinear(arr.astype(np.float64), xs_grid, ys_grid)
    valid = np.broadcast_to(valid_cols, (h, w)).copy()
    out[~valid] = 0.0
    return out.astype(arr.dtype), valid


def planar_shift_warp(src: ViewImage, dx: float) -> WarpResult:
    """Shift view content by dx pixels: out(x) = src(x + dx)."""
    if abs(dx) > src.width:
        raise ParameterError(f"translation {dx} exceeds view width {src.width}")
    out, valid = _shift_resample(src.pixels, dx)
    unknown = (~valid).astype(np.float32)
    return WarpResult(ViewImage(out.astype(np.float32)), Mask(unknown))


def planar_shift_field(values: np.ndarray, dx: float) -> np.ndarray:
    """Shift a scalar field the same way planar_shift_warp shifts images."""
    out, _ = _shift_resample(values[..., None], dx)
    return out[..., 0]


def _require_square(view: ViewImage, what: str) -> int:
    if view.width != view.height:
        raise DimensionError(f"{what} must be square, got {view.width}x{view.height}")
    return view.width


def _project_into(pose: CameraPose, dirs: np.ndarray):
    """Project world directions (..., 3) through a pose's pinhole.

    Returns (u, v, inside): image-plane coordinates at unit depth and the
    frustum test (front-facing and within the fov square).
    """
    forward, right, up = _basis(pose)
    half = math.tan(math.radians(pose.fov) / 2.0)
    t = dirs @ forward
    front = t > 0.0
    safe_t = np.where(front, t, 1.0)
    u = (dirs @ right) / safe_t
    v = (dirs @ up) / safe_t
    inside = front & (np.abs(u) <= half) & (np.abs(v) <= half)
    return u, v, inside


def _plane_to_pixels(u: np.ndarray, v: np.ndarray, size: int, fov_deg: float):
    half = math.tan(math.radians(fov_deg) / 2.0)
    xs = (u / half + 1.0) * size / 2.0 - 0.5
    ys = (1.0 - v / half) * size / 2.0 - 0.5
    return xs, ys


def _rotate_resample(arr: np.ndarray, src_pose: CameraPose, dst_pose: CameraPose):
    """Resample (S, S, C) from src_pose's frame into dst_pose's frame."""
    size = arr.shape[0]
    uu, vv = _ndc_grid(size, dst_pose.fov)
    f, r, up = _basis(dst_pose)
    dirs = f[None, None, :] + uu[..., None] * r[None, None, :] + vv[..., None] * up[None, None, :]
    su, sv, inside = _project_into(src_pose, dirs)
    xs, ys = _plane_to_pixels(su, sv, size, src_pose.fov)
    out = _sample_bilinear(arr.astype(np.float64), np.where(inside, xs, 0.0), np.where(inside, ys, 0.0))
    out[~inside] = 0.0
    return out.astype(arr.dtype), inside


def rotate_warp(src: ViewImage, src_pose: CameraPose, dst_pose: CameraPose) -> WarpResult:
    """Warp a view into another pose's frame; unknown where the destination
    ray exits the source frustum or faces backward."""
    _require_square(src, "rotate_warp source")
    out, inside = _rotate_resample(src.pixels, src_pose, dst_pose)
    return WarpResult(ViewImage(out.astype(np.float32)), Mask((~inside).astype(np.float32)))


def rotate_warp_field(values: np.ndarray, src_pose: CameraPose, dst_pose: CameraPose) -> np.ndarray:
    """Transport a scalar field with the same rotation warp as rotate_warp."""
    out, _ = _rotate_resample(values[..., None].astype(np.float64), src_pose, dst_pose)
    return out[..., 0]


def view_row_pitches(pose: CameraPose, size: int) -> np.ndarray:
    """Pitch in degrees of each view row's central-column ray."""
    half = math.tan(math.radians(pose.fov) / 2.0)
    v = (1.0 - 2.0 * (np.arange(size, dtype=np.float64) + 0.5) / size) * half
    f, _, up = _basis(pose)
    dirs = f[None, :] + v[:, None] * up[None, :]
    return np.degrees(np.arcsin(dirs[:, 1] / np.linalg.norm(dirs, axis=1)))


def _canvas_coords(canvas: PanoCanvas, dirs: np.ndarray):
    """Directions (..., 3) to fractional equirect canvas (row, col)."""
    norm = np.sqrt(np.sum(dirs * dirs, axis=-1))
    pitch = np.degrees(np.arcsin(np.clip(dirs[..., 1] / norm, -1.0, 1.0)))
    yaw = np.degrees(np.arctan2(dirs[..., 0], dirs[..., 2]))
    rows = (90.0 - pitch) * canvas.height / 180.0 - 0.5
    cols = (yaw + 180.0) * canvas.width / 360.0 - 0.5
    return rows, cols


def render_view(canvas: PanoCanvas, pose: CameraPose, size: int) -> tuple:
    """Render a perspective view from the equirect canvas.

    Returns (view, known) where known is the complement-sense mask: 1 where
    every sampled canvas texel is known. Unknown pixels are zero-filled.
    """
    if canvas.kind != EQUIRECT:
        raise UnsupportedKindError("render_view requires an equirect canvas")
    uu, vv = _ndc_grid(size, pose.fov)
    f, r, up = _basis(pose)
    dirs = f[None, None, :] + uu[..., None] * r[None, None, :] + vv[..., None] * up[None, None, :]
    rows, cols = _canvas_coords(canvas, dirs)

    h, w = canvas.height, canvas.width
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr = (rows - r0)[..., None]
    fc = (cols - c0)[..., None]
    r0i = np.clip(r0.astype(np.int64), 0, h - 1)  # pitch clamps at poles
    r1i = np.clip(r0.astype(np.int64) + 1, 0, h - 1)
    c0i = np.mod(c0.astype(np.int64), w)  # yaw wraps at the +-180 seam
    c1i = np.mod(c0.astype(np.int64) + 1, w)

    px = canvas.pixels
    top = px[r0i, c0i].astype(np.float64) * (1.0 - fc) + px[r0i, c1i].astype(np.float64) * fc
    bot = px[r1i, c0i].astype(np.float64) * (1.0 - fc) + px[r1i, c1i].astype(np.float64) * fc
    out = top * (1.0 - fr) + bot * fr

    kn = canvas.known
    known = kn[r0i, c0i] & kn[r0i, c1i] & kn[r1i, c0i] & kn[r1i, c1i]
    out[~known] = 0.0
    return ViewImage(out.astype(np.float32)), Mask(known.astype(np.float32))


def _frustum_row_band(canvas: PanoCanvas, pose: CameraPose):
    """Row indices whose pitch can intersect the pose's frustum.

    The frustum's angular radius from its axis is bounded by the corner angle
    atan(sqrt(2) tan(fov/2)).
    """
    half = math.tan(math.radians(pose.fov) / 2.0)
    radius = math.degrees(math.atan(math.sqrt(2.0) * half)) + 1e-9
    pitches = canvas.pitch_of_row(np.arange(canvas.height))
    sel = np.abs(pitches - pose.pitch) <= radius
    return np.nonzero(sel)[0]


def commit_view_inplace(
    canvas: PanoCanvas,
    view: ViewImage,
    pose: CameraPose,
    policy: str = FIRST_WRITE_WINS,
    feather_px: float = 0.0,
) -> float:
    """Write a fully known view onto the canvas, mutating it.

    Returns the mean absolute difference against previously known canvas
    pixels inside the frustum (nan when there is no overlap).
    """
    if canvas.kind != EQUIRECT:
        raise UnsupportedKindError("commit_view requires an equirect canvas")
    if policy not in (FIRST_WRITE_WINS, OVERWRITE):
        raise ParameterError(f"unknown commit policy {policy!r}")
    size = _require_square(view, "committed view")
    half = math.tan(math.radians(pose.fov) / 2.0)

    rows = _frustum_row_band(canvas, pose)
    overlap_sum = 0.0
    overlap_n = 0
    view_px = view.pixels.astype(np.float64)
    col_yaws = canvas.yaw_of_col(np.arange(canvas.width))

    for start in range(0, rows.size, _COMMIT_ROW_CHUNK):
        block = rows[start : start + _COMMIT_ROW_CHUNK]
        pitch = np.radians(canvas.pitch_of_row(block))[:, None]
        yaw = np.radians(col_yaws)[None, :]
        cp = np.cos(pitch)
        dirs = np.empty((block.size, canvas.width, 3), dtype=np.float64)
        np.multiply(cp, np.sin(yaw), out=dirs[:, :, 0])
        dirs[:, :, 1] = np.sin(pitch)
        np.multiply(cp, np.cos(yaw), out=dirs[:, :, 2])
        u, v, inside = _project_into(pose, dirs)
        if not inside.any():
            continue
        xs, ys = _plane_to_pixels(u, v, size, pose.fov)
        sampled = _sample_bilinear(view_px, np.where(inside, xs, 0.0), np.where(inside, ys, 0.0))

        known_block = canvas.known[block]
        overlap = inside & known_block
        if overlap.any():
            diff = np.abs(sampled[overlap] - canvas.pixels[block][overlap].astype(np.float64))
            overlap_sum += float(diff.sum())
            overlap_n += int(diff.shape[0])

        if policy == FIRST_WRITE_WINS:
            write = inside & ~known_block
        else:
            write = inside

        target = canvas.pixels[block]
        target[write] = sampled[write].astype(np.float32)
        if feather_px > 0.0 and policy == FIRST_WRITE_WINS:
            # Blend new content into already-known pixels near the view edge,
            # where the stitch seam between old and new content lies.
            edge = np.minimum(np.minimum(xs, size - 1.0 - xs), np.minimum(ys, size - 1.0 - ys))
            alpha = np.clip(1.0 - edge / feather_px, 0.0, 1.0)
            blend = overlap & (alpha > 0.0)
            if blend.any():
                a = alpha[blend][:, None]
                target[blend] = (
                    (1.0 - a) * target[blend].astype(np.float64) + a * sampled[blend]
                ).astype(np.float32)
        canvas.pixels[block] = target
        canvas.known[block] = known_block | inside

    if overlap_n == 0:
        return float("nan")
    return overlap_sum / (overlap_n * 3.0)


def commit_view(
    canvas: PanoCanvas,
    view: ViewImage,
    pose: CameraPose,
    policy: str = FIRST_WRITE_WINS,
) -> PanoCanvas:
    """Pure commit: returns a new canvas with the view written onto it."""
    out = canvas.copy()
    commit_view_inplace(out, view, pose, policy)
    return out
