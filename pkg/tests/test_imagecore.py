from __future__ import annotations

import numpy as np
import pytest

from panoweave.errors import DimensionError, ParameterError, UnsupportedKindError
from panoweave.imagecore import (
    EQUIRECT,
    PLANAR,
    CameraPose,
    Mask,
    PanoCanvas,
    RiskWeights,
    RowStats,
    ViewImage,
    image_from_png_bytes,
    image_to_png_bytes,
    mask_from_png_bytes,
    mask_to_png_bytes,
)


def _image(*, width: int = 8, height: int = 6, seed: int = 0) -> ViewImage:
    rng = np.random.default_rng(seed)
    return ViewImage(rng.random((height, width, 3), dtype=np.float32))


def test_view_image_shape_enforced_and_dtype_coerced() -> None:
    with pytest.raises(DimensionError):
        ViewImage(np.zeros((4, 4), dtype=np.float32))
    coerced = ViewImage(np.zeros((4, 4, 3), dtype=np.float64))
    assert coerced.pixels.dtype == np.float32


def test_view_image_copy_is_independent() -> None:
    a = _image()
    b = a.copy()
    b.pixels[0, 0, 0] = 9.0
    assert a.pixels[0, 0, 0] != 9.0


def test_mask_binary_check() -> None:
    assert Mask.zeros(4, 4).is_binary()
    assert Mask.ones(4, 4).is_binary()
    m = Mask.zeros(4, 4)
    m.values[0, 0] = 0.5
    assert not m.is_binary()


def test_risk_weights_reject_negative() -> None:
    with pytest.raises(ParameterError):
        RiskWeights(-0.1, 0.0, 0.0, 0.0)


def test_camera_pose_wraps_yaw() -> None:
    assert CameraPose(0.0, 180.0, 80.0).yaw == -180.0
    assert CameraPose(0.0, 270.0, 80.0).yaw == -90.0
    assert CameraPose(0.0, -200.0, 80.0).yaw == 160.0


def test_camera_pose_rejects_bad_pitch_and_fov() -> None:
    with pytest.raises(ParameterError):
        CameraPose(91.0, 0.0, 80.0)
    with pytest.raises(ParameterError):
        CameraPose(0.0, 0.0, 180.0)
    with pytest.raises(ParameterError):
        CameraPose(0.0, 0.0, 0.0)


def test_canvas_row_pitch_mapping_round_trips() -> None:
    canvas = PanoCanvas.blank(EQUIRECT, 64, 128)
    rows = np.arange(64)
    pitches = canvas.pitch_of_row(rows)
    assert pitches[0] == pytest.approx(90.0 - 180.0 * 0.5 / 64)
    assert pitches[-1] == pytest.approx(-90.0 + 180.0 * 0.5 / 64)
    back = canvas.row_of_pitch(pitches)
    assert np.allclose(back, rows)


def test_canvas_col_yaw_mapping_round_trips() -> None:
    canvas = PanoCanvas.blank(EQUIRECT, 64, 128)
    cols = np.arange(128)
    yaws = canvas.yaw_of_col(cols)
    assert yaws[0] == pytest.approx(-180.0 + 360.0 * 0.5 / 128)
    back = canvas.col_of_yaw(yaws)
    assert np.allclose(back, cols)


def test_planar_canvas_refuses_angle_queries() -> None:
    canvas = PanoCanvas.blank(PLANAR, 32, 64)
    with pytest.raises(UnsupportedKindError):
        canvas.pitch_of_row(np.arange(4))


def test_known_fraction() -> None:
    canvas = PanoCanvas.blank(EQUIRECT, 4, 8)
    assert canvas.known_fraction() == 0.0
    canvas.known[:2] = True
    assert canvas.known_fraction() == pytest.approx(0.5)


def test_image_png_round_trip_within_quantization() -> None:
    img = _image(width=16, height=12, seed=3)
    back = image_from_png_bytes(image_to_png_bytes(img))
    assert back.pixels.shape == img.pixels.shape
    assert float(np.abs(back.pixels - img.pixels).max()) <= 1.0 / 255.0 + 1e-6


def test_mask_png_round_trip_exact_for_binary() -> None:
    m = Mask.zeros(10, 7)
    m.values[2:5, 3:6] = 1.0
    back = mask_from_png_bytes(mask_to_png_bytes(m))
    assert np.array_equal(back.values, m.values)


def test_row_stats_empty_and_copy() -> None:
    stats = RowStats.empty(16)
    assert stats.rows == 16
    assert stats.count.sum() == 0
    dup = stats.copy()
    dup.count[0] = 5
    assert stats.count[0] == 0
