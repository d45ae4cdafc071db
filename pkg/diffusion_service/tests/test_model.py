from __future__ import annotations

import numpy as np

from diffusion_service.model import ToyLatentModel, decode, encode


def _smooth(size: int = 64) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.stack([0.3 + 0.4 * xs, 0.3 + 0.4 * ys, 0.5 + 0.2 * np.sin(2 * np.pi * xs)], axis=-1)
    return np.clip(img, 0.0, 1.0)


def test_encode_decode_round_trip_is_tight_on_smooth_content() -> None:
    img = _smooth()
    out = decode(encode(img), 64, 64)
    assert np.abs(out - img).mean() < 0.02


def test_decode_crops_padded_sizes() -> None:
    img = _smooth(64)[:37, :50]
    out = decode(encode(img), 37, 50)
    assert out.shape == (37, 50, 3)
    assert np.abs(out - img).mean() < 0.03


def test_t0_zero_is_pure_codec_round_trip() -> None:
    model = ToyLatentModel()
    img = _smooth()
    out = model.inpaint(img, "a pier", "", 0.0, 7.5, 1.0, 50, 3)
    want = np.clip(decode(encode(img), 64, 64), 0.0, 1.0)
    assert np.allclose(out, want.astype(np.float32))
    assert np.abs(out - img).mean() <= 0.1


def test_same_arguments_are_bit_deterministic() -> None:
    model = ToyLatentModel()
    img = _smooth()
    a = model.inpaint(img, "a pier", "blurry", 0.9, 7.5, 1.0, 25, 11)
    b = model.inpaint(img, "a pier", "blurry", 0.9, 7.5, 1.0, 25, 11)
    assert np.array_equal(a, b)


def test_seed_changes_the_sample() -> None:
    model = ToyLatentModel()
    img = _smooth()
    a = model.inpaint(img, "a pier", "", 0.9, 7.5, 1.0, 25, 1)
    b = model.inpaint(img, "a pier", "", 0.9, 7.5, 1.0, 25, 2)
    assert not np.array_equal(a, b)


def test_variance_scale_widens_the_initial_noise() -> None:
    model = ToyLatentModel()
    img = _smooth()
    base = model.inpaint(img, "a pier", "", 0.4, 1.0, 1e-12, 1, 5)
    lo = model.inpaint(img, "a pier", "", 0.4, 1.0, 0.0625, 1, 5)
    hi = model.inpaint(img, "a pier", "", 0.4, 1.0, 0.25, 1, 5)
    spread_lo = np.abs(lo.astype(np.float64) - base).std()
    spread_hi = np.abs(hi.astype(np.float64) - base).std()
    assert spread_hi > 1.5 * spread_lo > 0.0


def test_guidance_is_inert_when_prompts_coincide() -> None:
    model = ToyLatentModel()
    img = _smooth()
    a = model.inpaint(img, "same", "same", 0.8, 0.0, 1.0, 10, 4)
    b = model.inpaint(img, "same", "same", 0.8, 12.0, 1.0, 10, 4)
    assert np.array_equal(a, b)


def test_guidance_scale_shifts_the_sample_when_prompts_differ() -> None:
    model = ToyLatentModel()
    img = _smooth()
    a = model.inpaint(img, "a pier", "fog", 0.8, 0.0, 1.0, 10, 4)
    b = model.inpaint(img, "a pier", "fog", 0.8, 12.0, 1.0, 10, 4)
    assert not np.array_equal(a, b)
