"""Risk estimation for freshly warped views and the erase / filter steps
that act on it.

Risk maps score how likely a warped pixel is to carry accumulated error:
distance travelled along the generation path, proximity to view borders,
color deviation from same-row statistics, and gradient deviation likewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError
from .imagecore import Mask, RiskMap, RiskWeights, RowStats, ViewImage

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class MaskFilterParams:
    """Blur / threshold / median settings for cleaning an erase mask."""

    gauss_sigma: float = 2.0
    gauss_threshold: float = 0.5
    median_radius: int = 1

    def __post_init__(self) -> None:
        if self.gauss_sigma < 0.0:
            raise ParameterError("gauss_sigma must be >= 0")
        if not 0.0 < self.gauss_threshold < 1.0:
            raise ParameterError("gauss_threshold must be in (0, 1)")
        if self.median_radius < 0:
            raise ParameterError("median_radius must be >= 0")


def gaussian_blur(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, renormalized so borders keep unit weight."""
    if sigma <= 0.0:
        return values.astype(np.float64).copy()
    radius = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    out = values.astype(np.float64)
    ones = np.ones(values.shape, dtype=np.float64)
    for axis in (0, 1):
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="constant", cval=0.0)
        ones = ndimage.correlate1d(ones, kernel, axis=axis, mode="constant", cval=0.0)
    return out / ones


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 1e-12:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def risk_init(
    view_size: int,
    view_origin_in_pano: tuple,
    path_origin: tuple,
    axis_weights: tuple = (1.0, 0.25),
) -> RiskMap:
    """Distance-from-start risk: weighted Euclidean panorama distance of each
    pixel from the path origin, min-max normalized.

    view_origin_in_pano and path_origin are (horizontal, vertical) panorama
    coordinates of view centers, in panorama pixels.
    """
    w_h, w_v = float(axis_weights[0]), float(axis_weights[1])
    if w_h < 0.0 or w_v < 0.0:
        raise ParameterError("axis weights must be >= 0")
    if w_h == 0.0 and w_v == 0.0:
        raise ParameterError("at least one axis weight must be positive")
    center = (view_size - 1) / 2.0
    xs = np.arange(view_size, dtype=np.float64) - center
    dh = (view_origin_in_pano[0] - path_origin[0]) + xs[None, :]
    dv = (view_origin_in_pano[1] - path_origin[1]) + xs[:, None]
    dist = np.sqrt(w_h * dh**2 + w_v * dv**2)
    return RiskMap(_minmax(dist).astype(np.float32))


def risk_edge(view_size: int, band: int = 16, sigma: float = 16.0) -> RiskMap:
    """Border-proximity risk: blurred indicator of a band along the view
    borders, min-max normalized."""
    if band <= 0 or band * 2 > view_size:
        raise ParameterError(f"band {band} does not fit view size {view_size}")
    ind = np.zeros((view_size, view_size), dtype=np.float64)
    ind[:band, :] = 1.0
    ind[-band:, :] = 1.0
    ind[:, :band] = 1.0
    ind[:, -band:] = 1.0
    return RiskMap(_minmax(gaussian_blur(ind, sigma)).astype(np.float32))


def luminance(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) @ _LUMA


def gradient_magnitude(pixels: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude of luminance (one-sided at
    borders)."""
    y = luminance(pixels)
    gy, gx = np.gradient(y)
    return np.sqrt(gx**2 + gy**2)


def update_row_stats(stats: RowStats, view: ViewImage, rows: np.ndarray) -> RowStats:
    """Fold a view into running per-row statistics.

    rows maps each view row to its panorama row. Returns new stats; the
    running mean matches a from-scratch recount to float accumulation error.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape != (view.height,):
        raise DimensionError(f"expected {view.height} row indices, got {rows.shape}")
    if rows.min() < 0 or rows.max() >= stats.rows:
        raise ParameterError("row index outside the statistics table")
    out = stats.copy()
    color = view.pixels.astype(np.float64)
    grad = gradient_magnitude(view.pixels)
    w = view.width
    for i in range(view.height):
        r = rows[i]
        n_old = out.count[r]
        n_new = n_old + w
        out.mean_color[r] = (out.mean_color[r] * n_old + color[i].sum(axis=0)) / n_new
        out.mean_grad[r] = (out.mean_grad[r] * n_old + grad[i].sum()) / n_new
        out.count[r] = n_new
    return out


def risk_color(view: ViewImage, stats: RowStats, rows: np.ndarray, sigma: float = 4.0) -> RiskMap:
    """Color-deviation risk: distance of each pixel's color from its
    panorama row's mean color, normalized then blurred."""
    rows = np.asarray(rows, dtype=np.int64)
    ref = stats.mean_color[rows]  # (H, 3)
    dev = np.sqrt(np.sum((view.pixels.astype(np.float64) - ref[:, None, :]) ** 2, axis=-1))
    return RiskMap(gaussian_blur(_minmax(dev), sigma).astype(np.float32))


def risk_smooth(view: ViewImage, stats: RowStats, rows: np.ndarray, sigma: float = 4.0) -> RiskMap:
    """Texture-flatness risk: deviation of gradient magnitude from the
    panorama row's mean gradient, normalized then blurred."""
    rows = np.asarray(rows, dtype=np.int64)
    grad = gradient_magnitude(view.pixels)
    dev = np.abs(grad - stats.mean_grad[rows][:, None])
    return RiskMap(gaussian_blur(_minmax(dev), sigma).astype(np.float32))


def combine_risks(risks: dict, weights: RiskWeights) -> RiskMap:
    """Weighted sum of the four risk maps, clamped to [0, 1].

    risks holds any subset of keys init/edge/color/smooth; a missing key
    contributes nothing regardless of its weight.
    """
    w = {"init": weights.w_init, "edge": weights.w_edge, "color": weights.w_color, "smooth": weights.w_smooth}
    total = None
    for key, weight in w.items():
        r = risks.get(key)
        if r is None or weight == 0.0:
            continue
        term = weight * r.values.astype(np.float64)
        total = term if total is None else total + term
    if total is None:
        shape = next(iter(risks.values())).values.shape
        return RiskMap(np.zeros(shape, dtype=np.float32))
    return RiskMap(np.clip(total, 0.0, 1.0).astype(np.float32))


def erase_by_risk(mask: Mask, risk: RiskMap, fraction: float) -> Mask:
    """Mark the riskiest known pixels as unknown.

    Erases round(fraction * known_count) pixels by risk rank; ties at the
    cut risk value are all erased. Never un-erases.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError("erase fraction must be in [0, 1]")
    if mask.values.shape != risk.values.shape:
        raise DimensionError("mask and risk shapes differ")
    out = mask.copy()
    known = mask.values < 0.5
    n_known = int(known.sum())
    k = int(round(fraction * n_known))
    if k <= 0:
        return out
    known_risks = risk.values[known]
    # k-th largest risk among known pixels; everything at or above goes.
    threshold = np.partition(known_risks, n_known - k)[n_known - k]
    out.values[known & (risk.values >= threshold)] = 1.0
    return out


def filter_mask(mask: Mask, params: MaskFilterParams) -> Mask:
    """Clean a binary mask: Gaussian blur, threshold, then median filter.

    Output is binary. All-zero and all-one masks are fixed points.
    """
    if not mask.is_binary():
        raise ParameterError("filter_mask expects a binary mask")
    blurred = gaussian_blur(mask.values, params.gauss_sigma)
    binary = (blurred >= params.gauss_threshold).astype(np.float32)
    if params.median_radius > 0:
        size = 2 * params.median_radius + 1
        binary = ndimage.median_filter(binary, size=size, mode="nearest")
    return Mask(binary.astype(np.float32))
