"""End-to-end checks, one test per published acceptance criterion."""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from panoweave.backend import MockInpainter, mock_inpaint
from panoweave.errors import SequencingError
from panoweave.guidance import SdeditParams, build_inpaint_request
from panoweave.imagecore import EQUIRECT, CameraPose, Mask, PanoCanvas, RiskMap, ViewImage
from panoweave.pipeline import (
    ROLE_BACKWARD,
    ROLE_FORWARD,
    RunConfig,
    plan_paths,
    run_pipeline,
    select_symmetric_guidance,
    validate_plan,
)
from panoweave.projection import commit_view_inplace, render_view, rotate_warp
from panoweave.risk import (
    MaskFilterParams,
    erase_by_risk,
    filter_mask,
    risk_color,
    risk_edge,
    risk_init,
    risk_smooth,
    update_row_stats,
)
from panoweave.imagecore import RowStats

CANVAS_BYTES = 2048 * 4096 * (3 * 4 + 1)  # float32 pixels plus known flags

_SINGLE_THREAD_ENV = {**os.environ, "OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1"}


# --- shared slow runs (session scope keeps each full-size run to once) ---


@pytest.fixture(scope="session")
def cli_run(tmp_path_factory: pytest.TempPathFactory):
    """First full-size CLI run: output dir, wall seconds, child peak RSS KB."""
    out = tmp_path_factory.mktemp("cli") / "run1"
    wrapper = (
        "import resource, subprocess, sys\n"
        "rc = subprocess.call(sys.argv[1:])\n"
        "print('PEAK_RSS_KB', resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss)\n"
        "sys.exit(rc)\n"
    )
    cmd = [
        sys.executable, "-c", wrapper,
        sys.executable, "-m", "panoweave.cli", "pano360",
        "--prompt", "a coastal town at dusk", "--seed", "7",
        "--backend", "mock", "--output-dir", str(out),
    ]
    start = time.monotonic()
    proc = subprocess.run(cmd, capture_output=True, text=True, env=_SINGLE_THREAD_ENV)
    elapsed = time.monotonic() - start
    assert proc.returncode == 0, proc.stderr
    peak_kb = int(proc.stdout.strip().rsplit("PEAK_RSS_KB", 1)[1])
    return out, elapsed, peak_kb


@pytest.fixture(scope="session")
def pano360_result():
    config = RunConfig.for_task("pano360", prompt="a coastal town at dusk", seed=7)
    return config, run_pipeline(config, MockInpainter())


@pytest.fixture(scope="session")
def full_result():
    config = RunConfig.for_task("full", prompt="a coastal town at dusk", seed=7)
    return config, run_pipeline(config, MockInpainter())


# --- criterion 1: determinism and runtime of the default 360 run ---


def test_c01_pano360_cli_is_deterministic_and_fast(
    cli_run, tmp_path_factory: pytest.TempPathFactory
) -> None:
    out1, elapsed1, _ = cli_run
    assert elapsed1 < 60.0

    out2 = tmp_path_factory.mktemp("cli") / "run2"
    start = time.monotonic()
    proc = subprocess.run(
        [
            sys.executable, "-m", "panoweave.cli", "pano360",
            "--prompt", "a coastal town at dusk", "--seed", "7",
            "--backend", "mock", "--output-dir", str(out2),
        ],
        capture_output=True,
        text=True,
        env=_SINGLE_THREAD_ENV,
    )
    elapsed2 = time.monotonic() - start
    assert proc.returncode == 0, proc.stderr
    assert elapsed2 < 60.0

    first = (out1 / "panorama.png").read_bytes()
    second = (out2 / "panorama.png").read_bytes()
    assert first == second


# --- criterion 2: randomized inpaint calls never touch unmasked pixels ---


def test_c02_hundred_randomized_mock_steps_preserve_known_pixels() -> None:
    rng = np.random.default_rng(2024)
    size = 48
    for trial in range(100):
        image = ViewImage(rng.random((size, size, 3), dtype=np.float32))
        mask = Mask((rng.random((size, size)) < rng.uniform(0.05, 0.95)).astype(np.float32))
        t0 = float(rng.uniform(0.0, 0.999))
        seed = int(rng.integers(0, 2**62))
        request = build_inpaint_request(image, mask, "anything", SdeditParams(t0=t0, seed=seed))
        out = mock_inpaint(request)
        known = mask.values < 0.5
        assert np.array_equal(out.pixels[known], image.pixels[known]), f"trial {trial}"
        repeat = mock_inpaint(request)
        assert np.array_equal(out.pixels, repeat.pixels), f"trial {trial}"


# --- criterion 3: exact path plans for the published configurations ---


def test_c03_path_plan_goldens() -> None:
    planar = plan_paths(RunConfig.for_task("planar"))
    assert len(planar.steps) == 11
    assert (planar.canvas_height, planar.canvas_width) == (512, 3072)
    assert [s.index for s in planar.steps] == [0, 1, -1, 2, -2, 3, -3, 4, -4, 5, -5]
    assert all(abs(s.shift) == 256.0 for s in planar.steps if s.index != 0)

    pano = plan_paths(RunConfig.for_task("pano360"))
    assert len(pano.steps) == 8
    got_yaws = sorted((s.pose.yaw + 360.0) % 360.0 for s in pano.steps)
    want_yaws = sorted((y + 360.0) % 360.0 for y in (0.0, 40.0, -40.0, 80.0, -80.0, 120.0, -120.0, 180.0))
    assert got_yaws == want_yaws
    assert all(s.pose.fov == 80.0 for s in pano.steps)

    full = plan_paths(RunConfig.for_task("full"))
    stages = []
    for s in full.steps:
        if s.stage not in stages:
            stages.append(s.stage)
    assert stages == ["central", "expand_up", "expand_down", "pole_top", "pole_bottom"]
    assert len(full.stage_steps("central")) == 8
    assert len(full.stage_steps("expand_up")) == 4
    assert len(full.stage_steps("expand_down")) == 4
    assert len(full.stage_steps("pole_top")) == 1
    assert len(full.stage_steps("pole_bottom")) == 1


# --- criterion 4: projection fidelity ---


def _overlap_oracle(size: int, src: CameraPose, dst: CameraPose) -> float:
    half_src = math.tan(math.radians(src.fov) / 2.0)
    half_dst = math.tan(math.radians(dst.fov) / 2.0)

    def basis(pose: CameraPose):
        t, p = math.radians(pose.pitch), math.radians(pose.yaw)
        f = (math.cos(t) * math.sin(p), math.sin(t), math.cos(t) * math.cos(p))
        r = (math.cos(p), 0.0, -math.sin(p))
        u = (-math.sin(t) * math.sin(p), math.cos(t), -math.sin(t) * math.cos(p))
        return f, r, u

    fd, rd, ud = basis(dst)
    fs, rs, us = basis(src)
    inside = 0
    for y in range(size):
        for x in range(size):
            uu = (2.0 * (x + 0.5) / size - 1.0) * half_dst
            vv = (1.0 - 2.0 * (y + 0.5) / size) * half_dst
            d = tuple(fd[i] + uu * rd[i] + vv * ud[i] for i in range(3))
            t = sum(d[i] * fs[i] for i in range(3))
            if t <= 0.0:
                continue
            su = sum(d[i] * rs[i] for i in range(3)) / t
            sv = sum(d[i] * us[i] for i in range(3)) / t
            if abs(su) <= half_src and abs(sv) <= half_src:
                inside += 1
    return inside / (size * size)


def test_c04_round_trip_psnr_and_overlap_oracle() -> None:
    canvas = PanoCanvas.blank(EQUIRECT, 512, 1024)
    ys, xs = np.mgrid[0:512, 0:1024]
    for c, (fy, fx) in enumerate(((2.0, 3.0), (1.0, 5.0), (3.0, 2.0))):
        canvas.pixels[:, :, c] = 0.5 + 0.4 * np.sin(2.0 * math.pi * (fy * ys / 512 + fx * xs / 1024))
    canvas.pixels[:] = np.clip(canvas.pixels, 0.0, 1.0)
    canvas.known[:] = True

    pose = CameraPose(0.0, 25.0, 80.0)
    view, known = render_view(canvas, pose, 256)
    assert np.all(known.values == 1.0)
    blank = PanoCanvas.blank(EQUIRECT, 512, 1024)
    commit_view_inplace(blank, view, pose)
    diff = (blank.pixels[blank.known] - canvas.pixels[blank.known]).astype(np.float64)
    psnr = 10.0 * math.log10(1.0 / float(np.mean(diff**2)))
    assert psnr >= 30.0

    size = 96
    src = CameraPose(0.0, 0.0, 80.0)
    dst = CameraPose(0.0, 40.0, 80.0)
    rng = np.random.default_rng(0)
    warp = rotate_warp(ViewImage(rng.random((size, size, 3), dtype=np.float32)), src, dst)
    measured = 1.0 - float(warp.unknown.values.mean())
    assert abs(measured - _overlap_oracle(size, src, dst)) <= 0.005


# --- criterion 5: erase counts are exact against a sorting oracle ---


def test_c05_erase_exactness_against_sort_oracle() -> None:
    rng = np.random.default_rng(55)
    size = 64
    # A permutation keeps every risk value distinct, so rank selection is
    # unambiguous and the changed set must match the sort oracle exactly.
    distinct = rng.permutation(size * size).reshape(size, size) / (size * size)
    risk = RiskMap(distinct.astype(np.float32))
    mask = Mask((rng.random((size, size)) < 0.25).astype(np.float32))
    known = mask.values < 0.5
    n_known = int(known.sum())
    for fraction in (0.05, 0.1, 0.2, 0.3):
        out = erase_by_risk(mask, risk, fraction)
        changed = out.values != mask.values
        k = int(round(fraction * n_known))
        assert int(changed.sum()) == k, f"fraction {fraction}"

        order = np.argsort(risk.values[known], kind="stable")[::-1][:k]
        want = set(map(tuple, np.argwhere(known)[order]))
        assert set(map(tuple, np.argwhere(changed))) == want, f"fraction {fraction}"


# --- criterion 6: risk maps match dense oracles ---


def _dense_blur_oracle(values: np.ndarray, sigma: float) -> np.ndarray:
    """Direct 2D truncated-Gaussian convolution with border renormalization."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    k1 = np.array([math.exp(-0.5 * (i / sigma) ** 2) for i in range(-radius, radius + 1)])
    k1 /= k1.sum()
    h, w = values.shape
    acc = np.zeros((h, w), dtype=np.float64)
    norm = np.zeros((h, w), dtype=np.float64)
    src = values.astype(np.float64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            kk = k1[dy + radius] * k1[dx + radius]
            ys = slice(max(0, -dy), h - max(0, dy))
            xs = slice(max(0, -dx), w - max(0, dx))
            sy = slice(max(0, dy), h - max(0, -dy))
            sx = slice(max(0, dx), w - max(0, -dx))
            acc[ys, xs] += kk * src[sy, sx]
            norm[ys, xs] += kk
    return acc / norm


def _minmax_oracle(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 1e-12:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def _grad_oracle(pixels: np.ndarray) -> np.ndarray:
    luma = (pixels[..., 0] * 0.299 + pixels[..., 1] * 0.587 + pixels[..., 2] * 0.114).astype(np.float64)
    h, w = luma.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            y0, y1 = max(y - 1, 0), min(y + 1, h - 1)
            x0, x1 = max(x - 1, 0), min(x + 1, w - 1)
            gy = (luma[y1, x] - luma[y0, x]) / (y1 - y0)
            gx = (luma[y, x1] - luma[y, x0]) / (x1 - x0)
            out[y, x] = math.sqrt(gx * gx + gy * gy)
    return out


def test_c06_risk_maps_match_dense_oracles() -> None:
    rng = np.random.default_rng(66)
    for size in (32, 64):
        band, sigma = max(2, size // 8), 4.0
        got_edge = risk_edge(size, band, sigma).values
        ind = np.zeros((size, size))
        ind[:band] = ind[-band:] = 1.0
        ind[:, :band] = ind[:, -band:] = 1.0
        want_edge = _minmax_oracle(_dense_blur_oracle(ind, sigma))
        assert np.abs(got_edge - want_edge).max() <= 1e-5
        assert 0.0 <= got_edge.min() and got_edge.max() <= 1.0

        view = ViewImage(rng.random((size, size, 3), dtype=np.float32))
        rows = np.arange(size)
        stats = update_row_stats(RowStats.empty(size), view, rows)

        got_color = risk_color(view, stats, rows, 2.0).values
        dev = np.sqrt(((view.pixels.astype(np.float64) - stats.mean_color[:, None, :]) ** 2).sum(-1))
        want_color = _dense_blur_oracle(_minmax_oracle(dev), 2.0)
        assert np.abs(got_color - want_color).max() <= 1e-5
        assert 0.0 <= got_color.min() and got_color.max() <= 1.0

        got_smooth = risk_smooth(view, stats, rows, 2.0).values
        dev = np.abs(_grad_oracle(view.pixels) - stats.mean_grad[:, None])
        want_smooth = _dense_blur_oracle(_minmax_oracle(dev), 2.0)
        assert np.abs(got_smooth - want_smooth).max() <= 1e-5
        assert 0.0 <= got_smooth.min() and got_smooth.max() <= 1.0

    risk = risk_init(33, (120.0, -40.0), (0.0, 0.0), (1.0, 0.25)).values
    pts = rng.integers(0, 33, size=(200, 2))
    for (y1, x1), (y2, x2) in zip(pts[:100], pts[100:]):
        d1 = math.sqrt((120.0 + x1 - 16.0) ** 2 + 0.25 * (-40.0 + y1 - 16.0) ** 2)
        d2 = math.sqrt((120.0 + x2 - 16.0) ** 2 + 0.25 * (-40.0 + y2 - 16.0) ** 2)
        if d1 > d2:
            assert risk[y1, x1] >= risk[y2, x2]
        elif d2 > d1:
            assert risk[y2, x2] >= risk[y1, x1]


# --- criterion 7: coverage and the symmetric guidance invariant ---


def test_c07_band_coverage_full_coverage_and_guidance_invariant(
    pano360_result, full_result
) -> None:
    config, result = pano360_result
    canvas = result.canvas
    pitches = canvas.pitch_of_row(np.arange(canvas.height))
    band = np.abs(pitches) <= 40.0
    assert bool(canvas.known[band].all())

    _, full = full_result
    assert full.canvas.known_fraction() == 1.0

    for task in ("planar", "pano360", "full"):
        cfg = RunConfig.for_task(task)
        plan = plan_paths(cfg)
        validate_plan(plan, cfg)
        for step in plan.steps:
            if step.role in (ROLE_FORWARD, ROLE_BACKWARD):
                kind, stage, index = step.guidance_source
                assert kind == "mirror"
                assert stage == step.stage
                assert index == select_symmetric_guidance(step.index)
    with pytest.raises(SequencingError):
        select_symmetric_guidance(0)


# --- criterion 8: erase-mask filtering behaves like a cleanup pass ---


def _perimeter(values: np.ndarray) -> int:
    ones = values >= 0.5
    total = 0
    h, w = ones.shape
    for y in range(h):
        for x in range(w):
            if not ones[y, x]:
                continue
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w) or not ones[yy, xx]:
                    total += 1
    return total


def test_c08_mask_filter_binary_fixed_points_speck_and_perimeter() -> None:
    params = MaskFilterParams()
    rng = np.random.default_rng(88)
    noisy = Mask((rng.random((32, 32)) < 0.5).astype(np.float32))
    assert filter_mask(noisy, params).is_binary()

    assert np.all(filter_mask(Mask.zeros(24, 24), params).values == 0.0)
    assert np.all(filter_mask(Mask.ones(24, 24), params).values == 1.0)

    speck = Mask.zeros(24, 24)
    speck.values[12, 12] = 1.0
    assert np.all(filter_mask(speck, MaskFilterParams(gauss_sigma=0.0, median_radius=1)).values == 0.0)

    for period in (2, 4):
        size = 48
        toothed = Mask.zeros(size, size)
        toothed.values[size // 2 + 2 :, :] = 1.0
        teeth = (np.arange(size) // period) % 2 == 0
        toothed.values[size // 2 : size // 2 + 2, teeth] = 1.0
        before = _perimeter(toothed.values)
        filtered = filter_mask(toothed, params)
        after = _perimeter(filtered.values)
        assert 0 < after < before, f"period {period}"


# --- criterion 9: memory budget and sequential backend access ---


def test_c09_memory_budget_and_sequential_backend(cli_run) -> None:
    _, _, peak_kb = cli_run
    assert peak_kb * 1024 < 4 * CANVAS_BYTES

    class Counting:
        preserves_known_exactly = True

        def __init__(self) -> None:
            self.inner = MockInpainter()
            self.active = 0
            self.max_active = 0

        def __call__(self, request):
            self.active += 1
            self.max_active = max(self.max_active, self.active)
            try:
                return self.inner(request)
            finally:
                self.active -= 1

    config = RunConfig.for_task(
        "pano360",
        prompt="a scene",
        seed=1,
        view_size=48,
        canvas_height=128,
        canvas_width=256,
        edge_band=6,
        edge_sigma=3.0,
        gauss_sigma=1.0,
    )
    counting = Counting()
    result = run_pipeline(config, counting)
    assert counting.max_active == 1
    assert result.diagnostics["totals"]["backend_calls"] > 0
