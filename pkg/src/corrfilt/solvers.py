"""Closed-form frequency-domain training of ASEF, MOSSE and MCCF filters.

Filters are stored in correlation form: the response to a feature map is
``ifft(sum_k conj(F_k) * X_k)``. Under that convention the ridge problem

    min_F  sum_i || Y_i - sum_k conj(F_k) X_ik ||^2 + lam * ||F||^2

decouples over frequency bins into K x K Hermitian systems

    (lam I + sum_i x_i x_i^H) F = sum_i x_i conj(y_i)

where ``x_i`` is the K-vector of channel coefficients at that bin.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import LABEL_VARIANCE, DesiredResponse, FeatureMap
from .spectral import DimensionError, ifft_planes

LAMBDA = 1e-4


class NumericError(ArithmeticError):
    pass


@dataclass(eq=False)
class SpectralFilter:
    spectra: np.ndarray  # complex (K, H, W)
    method: str = "mccf"
    feature: str = "hog"
    cell_size: int = 1
    peak: tuple[int, int] = (0, 0)  # label peak in feature coordinates

    def __post_init__(self):
        self.spectra = np.asarray(self.spectra, dtype=np.complex128)
        if self.spectra.ndim != 3:
            raise DimensionError(f"filter spectra must be (K, H, W), got {self.spectra.shape}")

    @property
    def channels(self) -> int:
        return self.spectra.shape[0]

    @property
    def height(self) -> int:
        return self.spectra.shape[1]

    @property
    def width(self) -> int:
        return self.spectra.shape[2]

    @property
    def spatial(self) -> np.ndarray:
        return ifft_planes(self.spectra)

    def like(self, spectra: np.ndarray, method: str | None = None) -> "SpectralFilter":
        return SpectralFilter(spectra, method or self.method, self.feature, self.cell_size, self.peak)

    def vector(self) -> np.ndarray:
        """Spectra flattened to real/imag interleaved float64."""
        return np.ascontiguousarray(self.spectra).view(np.float64).ravel()


@dataclass
class TrainConfig:
    lam: float = LAMBDA
    label_variance: float = LABEL_VARIANCE
    feature: str = "hog"
    cell_size: int = 5
    filter_size: tuple[int, int] = (60, 60)  # pixels

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def check_inputs(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse]) -> None:
    if len(samples) == 0:
        raise ValueError("no training samples")
    if len(samples) != len(labels):
        raise ValueError(f"{len(samples)} samples but {len(labels)} labels")
    shape = samples[0].planes.shape
    for s in samples:
        if s.planes.shape != shape:
            raise DimensionError(f"sample shape {s.planes.shape} != {shape}")
    for lab in labels:
        if lab.values.shape != shape[1:]:
            raise DimensionError(f"label shape {lab.values.shape} != {shape[1:]}")


def stack_inputs(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse]):
    """Return (N, K, H, W) feature spectra and (N, H, W) label spectra."""
    check_inputs(samples, labels)
    X = np.stack([s.spectra for s in samples])
    Y = np.stack([lab.spectrum for lab in labels])
    return X, Y


def normal_terms(X: np.ndarray, Y: np.ndarray):
    """Per-bin Gram matrices (H, W, K, K) and right-hand sides (H, W, K)."""
    gram = np.einsum("nkhw,nlhw->hwkl", X, X.conj())
    rhs = np.einsum("nkhw,nhw->hwk", X, Y.conj())
    return gram, rhs


def accumulate_terms(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse], chunk: int = 1):
    """``normal_terms`` summed over chunks, so only ``chunk`` spectra are stacked at once."""
    check_inputs(samples, labels)
    gram = rhs = None
    for i in range(0, len(samples), chunk):
        g, r = normal_terms(*stack_inputs(samples[i:i + chunk], labels[i:i + chunk]))
        if gram is None:
            gram, rhs = g, r
        else:
            gram += g
            rhs += r
    return gram, rhs


def solve_bins(gram: np.ndarray, rhs: np.ndarray, reg: float) -> np.ndarray:
    """Solve ``(gram + reg I) F = rhs`` at every bin; returns (K, H, W)."""
    K = rhs.shape[-1]
    if K == 1:
        denom = gram[..., 0, 0] + reg
        if np.any(denom == 0):
            bad = tuple(int(i) for i in np.argwhere(denom == 0)[0])
            raise NumericError(f"singular system at frequency bin {bad}")
        return (rhs[..., 0] / denom)[None]
    A = gram + reg * np.eye(K)
    try:
        sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        dets = np.abs(np.linalg.det(A))
        bad = tuple(int(i) for i in np.unravel_index(np.argmin(dets), dets.shape))
        raise NumericError(f"singular system at frequency bin {bad}") from None
    if not np.all(np.isfinite(sol)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(sol).all(-1))[0])
        raise NumericError(f"singular system at frequency bin {bad}")
    return np.moveaxis(sol, -1, 0)


def _meta(samples, labels, method):
    return dict(method=method, feature="hog" if samples[0].cell_size > 1 else "intensity",
                cell_size=samples[0].cell_size, peak=labels[0].peak)


def train_mccf(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
               lam: float = LAMBDA) -> SpectralFilter:
    gram, rhs = accumulate_terms(samples, labels)
    return SpectralFilter(solve_bins(gram, rhs, lam), **_meta(samples, labels, "mccf"))


def _single_channel(samples):
    if any(s.channels != 1 for s in samples):
        raise ValueError("single-channel filter needs K=1 feature maps")


def train_mosse(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
                lam: float = LAMBDA) -> SpectralFilter:
    _single_channel(samples)
    X, Y = stack_inputs(samples, labels)
    x = X[:, 0]
    num = (x * Y.conj()).sum(axis=0)
    den = (x * x.conj()).real.sum(axis=0) + lam
    return SpectralFilter((num / den)[None], **_meta(samples, labels, "mosse"))


def train_asef(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
               epsilon: float | None = None) -> SpectralFilter:
    """Average of per-sample exact filters; ``epsilon`` defaults to 1e-4 * mean |X|^2."""
    _single_channel(samples)
    X, Y = stack_inputs(samples, labels)
    x = X[:, 0]
    power = (x * x.conj()).real
    if epsilon is None:
        epsilon = 1e-4 * power.mean()
        if epsilon == 0:
            epsilon = 1e-12
    exact = x * Y.conj() / (power + epsilon)
    return SpectralFilter(exact.mean(axis=0)[None], **_meta(samples, labels, "asef"))


def objective(filt: SpectralFilter, samples, labels, lam: float = LAMBDA) -> float:
    """Frequency-domain ridge objective evaluated at ``filt``."""
    X, Y = stack_inputs(samples, labels)
    pred = np.einsum("khw,nkhw->nhw", filt.spectra.conj(), X)
    return 0.5 * float(np.sum(np.abs(Y - pred) ** 2)) + 0.5 * lam * float(np.sum(np.abs(filt.spectra) ** 2))
