"""2-D DFT helpers and frequency-domain correlation.

Convention: unnormalized forward transform, ``1/(W*H)`` on the inverse,
circular boundaries everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Array shapes or channel counts do not agree."""


@dataclass(frozen=True)
class Spectrum2D:
    coefficients: np.ndarray  # complex, (height, width), standard DFT ordering

    @property
    def height(self) -> int:
        return self.coefficients.shape[0]

    @property
    def width(self) -> int:
        return self.coefficients.shape[1]


def forward_fft(image) -> Spectrum2D:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2-D array, got shape {arr.shape}")
    return Spectrum2D(np.fft.fft2(arr))


def inverse_fft(spec) -> np.ndarray:
    """Inverse transform, keeping only the real part."""
    coeffs = spec.coefficients if isinstance(spec, Spectrum2D) else np.asarray(spec)
    if coeffs.ndim != 2 or coeffs.size == 0:
        raise DimensionError(f"expected a non-empty 2-D spectrum, got shape {coeffs.shape}")
    return np.fft.ifft2(coeffs).real


def fft_planes(planes: np.ndarray) -> np.ndarray:
    """Channel-wise forward transform of a (K, H, W) stack."""
    return np.fft.fft2(np.asarray(planes, dtype=np.float64), axes=(-2, -1))


def ifft_planes(spectra: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(spectra, axes=(-2, -1)).real


def correlate_spectra(filter_spectra: np.ndarray, feature_spectra: np.ndarray) -> np.ndarray:
    """Response map ``ifft(sum_k conj(F_k) * X_k)`` for (K, H, W) spectra."""
    if filter_spectra.shape != feature_spectra.shape:
        raise DimensionError(
            f"filter shape {filter_spectra.shape} != feature shape {feature_spectra.shape}"
        )
    acc = np.einsum("khw,khw->hw", filter_spectra.conj(), feature_spectra)
    return np.fft.ifft2(acc).real


def correlate(filt, features) -> np.ndarray:
    """Circular cross-correlation of a multi-channel filter with a feature map.

    ``response[u, v] = sum_k sum_{m, n} f_k[m, n] * x_k[m + u, n + v]`` with
    indices taken modulo the map size.
    """
    return correlate_spectra(filt.spectra, features.spectra)
