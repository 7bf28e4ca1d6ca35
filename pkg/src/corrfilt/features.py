"""Image normalization, intensity/HOG feature maps and Gaussian labels."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spectral import DimensionError, fft_planes

HOG_CELL = 5
HOG_BLOCK = 5
HOG_BINS = 5
HOG_EPS = 1e-5
LABEL_VARIANCE = 2.0


@dataclass(eq=False)
class FeatureMap:
    """K planes of equal size; ``cell_size`` is the pixel pitch of one entry."""

    planes: np.ndarray  # (K, H, W) float64
    cell_size: int = 1

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim == 2:
            self.planes = self.planes[None]
        if self.planes.ndim != 3 or self.planes.size == 0:
            raise DimensionError(f"feature planes must be (K, H, W), got {self.planes.shape}")

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]

    @cached_property
    def spectra(self) -> np.ndarray:
        return fft_planes(self.planes)


@dataclass(eq=False)
class DesiredResponse:
    values: np.ndarray
    peak: tuple[int, int]
    variance: float = LABEL_VARIANCE

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.fft2(self.values)


def power_normalize(image) -> np.ndarray:
    """Zero mean, unit standard deviation. Constant images map to zeros."""
    arr = np.asarray(image, dtype=np.float64)
    centered = arr - arr.mean()
    std = centered.std()
    if std < 1e-12:
        return np.zeros_like(arr)
    return centered / std


def extract_intensity(image) -> FeatureMap:
    return FeatureMap(power_normalize(image)[None], cell_size=1)


def _window_sum(arr: np.ndarray, bh: int, bw: int) -> np.ndarray:
    """Sum over every bh x bw window fully inside ``arr`` (valid positions)."""
    h, w = arr.shape
    out = np.zeros((h - bh + 1, w - bw + 1))
    for i in range(bh):
        for j in range(bw):
            out += arr[i:i + h - bh + 1, j:j + w - bw + 1]
    return out


def _coverage_sum(block_vals: np.ndarray, bh: int, bw: int) -> np.ndarray:
    """For each cell, sum of ``block_vals`` over the blocks that cover it."""
    nh, nw = block_vals.shape
    out = np.zeros((nh + bh - 1, nw + bw - 1))
    for i in range(bh):
        for j in range(bw):
            out[i:i + nh, j:j + nw] += block_vals
    return out


def extract_hog(image, cell_size: int = HOG_CELL, block_size: int = HOG_BLOCK,
                num_bins: int = HOG_BINS) -> FeatureMap:
    """Cell-resolution HOG map with ``num_bins`` channels.

    Unsigned gradients; bin ``b`` is centred at ``b * 180 / num_bins`` degrees
    and votes are split linearly between the two nearest centres. Blocks of
    ``block_size`` x ``block_size`` cells (stride one cell) are L2 normalized,
    and each cell keeps the average of its normalized values over all blocks
    covering it.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    if h % cell_size or w % cell_size:
        raise DimensionError(f"image {h}x{w} not divisible by cell size {cell_size}")
    hc, wc = h // cell_size, w // cell_size

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    pos = angle * (num_bins / np.pi)
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % num_bins
    hi = (lo + 1) % num_bins

    votes = np.zeros((num_bins, h, w))
    for b in range(num_bins):
        votes[b] = mag * ((lo == b) * (1.0 - frac) + (hi == b) * frac)
    cells = votes.reshape(num_bins, hc, cell_size, wc, cell_size).sum(axis=(2, 4))

    bh, bw = min(block_size, hc), min(block_size, wc)
    energy = (cells ** 2).sum(axis=0)
    inv_norm = 1.0 / np.sqrt(_window_sum(energy, bh, bw) + HOG_EPS ** 2)
    coverage = _coverage_sum(np.ones_like(inv_norm), bh, bw)
    scale = _coverage_sum(inv_norm, bh, bw) / coverage
    return FeatureMap(cells * scale[None], cell_size=cell_size)


def extract_features(image, mode: str = "hog", cell_size: int = HOG_CELL) -> FeatureMap:
    if mode == "hog":
        return extract_hog(image, cell_size=cell_size)
    if mode == "intensity":
        return extract_intensity(image)
    raise ValueError(f"unknown feature mode {mode!r}")


def gaussian_response(width: int, height: int, peak: tuple[int, int],
                      variance: float = LABEL_VARIANCE) -> DesiredResponse:
    """Gaussian label ``exp(-d^2 / (2 variance))`` using wrap-around distance to ``peak``."""
    pr, pc = peak
    if not (0 <= pr < height and 0 <= pc < width):
        raise ValueError(f"peak {peak} outside {height}x{width} grid")
    dr = np.abs(np.arange(height) - pr)
    dr = np.minimum(dr, height - dr)
    dc = np.abs(np.arange(width) - pc)
    dc = np.minimum(dc, width - dc)
    d2 = dr[:, None] ** 2 + dc[None, :] ** 2
    return DesiredResponse(np.exp(-d2 / (2.0 * variance)), (int(pr), int(pc)), variance)


def label_for(features: FeatureMap, center_px: tuple[float, float],
              variance: float = LABEL_VARIANCE) -> DesiredResponse:
    """Label at feature resolution for a target centred at ``center_px`` (pixels)."""
    cs = features.cell_size
    peak = (int(center_px[0] // cs), int(center_px[1] // cs))
    return gaussian_response(features.width, features.height, peak, variance)
