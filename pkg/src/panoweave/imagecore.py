"""Value types shared by every stage: images, masks, risk maps, poses, canvases."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionError, ParameterError, UnsupportedKindError

PLANAR = "planar"
EQUIRECT = "equirect"


def _check_field(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise DimensionError(f"{what} array must be (H, W), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{what} dimensions must be positive, got {arr.shape}")
    return arr


@dataclass
class ViewImage:
    """Square or rectangular RGB raster, linear float in [0, 1], shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"image array must be (H, W, 3), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"image dimensions must be positive, got {arr.shape}")
        self.pixels = arr

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, value: float = 0.0) -> "ViewImage":
        return cls(np.full((height, width, 3), value, dtype=np.float32))

    def copy(self) -> "ViewImage":
        return ViewImage(self.pixels.copy())


@dataclass
class Mask:
    """Per-pixel float in [0, 1]; 1 = unknown / to-inpaint, 0 = known / keep."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _check_field(self.values, "mask")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=np.float32))

    @classmethod
    def ones(cls, width: int, height: int) -> "Mask":
        return cls(np.ones((height, width), dtype=np.float32))

    def is_binary(self) -> bool:
        v = self.values
        return bool(np.all((v == 0.0) | (v == 1.0)))

    def copy(self) -> "Mask":
        return Mask(self.values.copy())


@dataclass
class RiskMap:
    """Per-pixel risk in [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _check_field(self.values, "risk map")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "RiskMap":
        return RiskMap(self.values.copy())


@dataclass(frozen=True)
class RiskWeights:
    """Combination weights for (init, edge, color, smooth) risk terms."""

    w_init: float
    w_edge: float
    w_color: float
    w_smooth: float

    def __post_init__(self) -> None:
        for name, w in zip(("w_init", "w_edge", "w_color", "w_smooth"), self.as_tuple()):
            if w < 0:
                raise ParameterError(f"{name} must be >= 0, got {w}")

    def as_tuple(self) -> tuple:
        return (self.w_init, self.w_edge, self.w_color, self.w_smooth)


@dataclass(frozen=True)
class CameraPose:
    """Pitch/yaw/fov in degrees; roll is fixed at zero."""

    pitch: float
    yaw: float
    fov: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.pitch <= 90.0:
            raise ParameterError(f"pitch must be in [-90, 90], got {self.pitch}")
        if not 0.0 < self.fov < 180.0:
            raise ParameterError(f"fov must be in (0, 180), got {self.fov}")
        # yaw normalized into [-180, 180)
        object.__setattr__(self, "yaw", ((self.yaw + 180.0) % 360.0) - 180.0)


@dataclass
class PanoCanvas:
    """Accumulating panorama surface with per-pixel known flags.

    kind "equirect": rows map linearly to pitch over [90, -90] and columns to
    yaw over [-180, 180), both at pixel centers. kind "planar": a flat strip.
    """

    kind: str
    pixels: np.ndarray
    known: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in (PLANAR, EQUIRECT):
            raise ParameterError(f"unknown canvas kind {self.kind!r}")
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        self.known = np.asarray(self.known, dtype=bool)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DimensionError(f"canvas pixels must be (H, W, 3), got {self.pixels.shape}")
        if self.known.shape != self.pixels.shape[:2]:
            raise DimensionError(
                f"known flags {self.known.shape} do not match canvas {self.pixels.shape[:2]}"
            )

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, kind: str, height: int, width: int) -> "PanoCanvas":
        return cls(
            kind,
            np.zeros((height, width, 3), dtype=np.float32),
            np.zeros((height, width), dtype=bool),
        )

    def copy(self) -> "PanoCanvas":
        return PanoCanvas(self.kind, self.pixels.copy(), self.known.copy())

    def known_fraction(self) -> float:
        return float(self.known.mean())

    def _require_equirect(self) -> None:
        if self.kind != EQUIRECT:
            raise UnsupportedKindError("angle mapping is defined for equirect canvases only")

    def pitch_of_row(self, rows):
        self._require_equirect()
        return 90.0 - 180.0 * (np.asarray(rows, dtype=np.float64) + 0.5) / self.height

    def yaw_of_col(self, cols):
        self._require_equirect()
        return -180.0 + 360.0 * (np.asarray(cols, dtype=np.float64) + 0.5) / self.width

    def row_of_pitch(self, pitch):
        self._require_equirect()
        return (90.0 - np.asarray(pitch, dtype=np.float64)) * self.height / 180.0 - 0.5

    def col_of_yaw(self, yaw):
        self._require_equirect()
        return (np.asarray(yaw, dtype=np.float64) + 180.0) * self.width / 360.0 - 0.5


@dataclass
class RowStats:
    """Running per-row aggregates over every view generated so far."""

    mean_color: np.ndarray  # (rows, 3) float64
    mean_grad: np.ndarray  # (rows,) float64
    count: np.ndarray  # (rows,) int64, pixel samples per row

    @classmethod
    def empty(cls, rows: int) -> "RowStats":
        return cls(
            np.zeros((rows, 3), dtype=np.float64),
            np.zeros(rows, dtype=np.float64),
            np.zeros(rows, dtype=np.int64),
        )

    @property
    def rows(self) -> int:
        return self.mean_color.shape[0]

    def copy(self) -> "RowStats":
        return RowStats(self.mean_color.copy(), self.mean_grad.copy(), self.count.copy())


# --- external 8-bit PNG interchange ---


def _to_u8(values: np.ndarray) -> np.ndarray:
    out = np.clip(values, 0.0, 1.0)
    np.multiply(out, 255.0, out=out)
    np.round(out, out=out)
    return out.astype(np.uint8)


def image_to_png_bytes(image: ViewImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(_to_u8(image.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> ViewImage:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return ViewImage(arr)


def mask_to_png_bytes(mask: Mask) -> bytes:
    # grayscale, 255 = unknown / to-inpaint
    buf = io.BytesIO()
    Image.fromarray(_to_u8(mask.values), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(data: bytes) -> Mask:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    return Mask(arr)


def write_image_png(image: ViewImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(image_to_png_bytes(image))


def read_image_png(path) -> ViewImage:
    with open(path, "rb") as fh:
        return image_from_png_bytes(fh.read())


def write_mask_png(mask: Mask, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_png_bytes(mask))


def read_mask_png(path) -> Mask:
    with open(path, "rb") as fh:
        return mask_from_png_bytes(fh.read())


def write_risk_png(risk: RiskMap, path) -> None:
    with open(path, "wb") as fh:
        buf = io.BytesIO()
        Image.fromarray(_to_u8(risk.values), mode="L").save(buf, format="PNG")
        fh.write(buf.getvalue())
