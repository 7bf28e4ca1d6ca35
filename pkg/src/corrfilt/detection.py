"""Single-target detection by filter correlation, plus localization scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dbcf as dbcf_mod
from .dataset import LabeledImage, add_gaussian_noise, affine_perturb, flip_horizontal, to_float
from .features import LABEL_VARIANCE, HOG_CELL, extract_features, label_for, power_normalize
from .solvers import LAMBDA, SpectralFilter, train_asef, train_mccf, train_mosse
from .spectral import DimensionError, correlate_spectra, fft_planes

FILTER_SIZE = (60, 60)
METHOD_FEATURES = {"asef": "intensity", "mosse": "intensity", "mccf": "hog", "dbcf": "hog"}


@dataclass(eq=False)
class DetectionResult:
    predicted: tuple[float, float]  # (row, col) in image pixels
    peak_value: float
    response: np.ndarray  # indexed by target-centre position at feature resolution


@dataclass
class LocalizationReport:
    distances: np.ndarray
    thresholds: list
    rates: list


def crop_window(image, center, size) -> tuple[np.ndarray, int, int]:
    """``size`` window centred on ``center`` with edge replication; returns (patch, top, left)."""
    img = np.asarray(image)
    h, w = size
    top = int(round(center[0] - h / 2.0))
    left = int(round(center[1] - w / 2.0))
    H, W = img.shape
    pad = max(0, -top, -left, top + h - H, left + w - W)
    if pad:
        img = np.pad(img, pad, mode="edge")
    return img[top + pad:top + pad + h, left + pad:left + pad + w], top, left


def training_pair(item: LabeledImage, feature: str = "hog", size=FILTER_SIZE,
                  cell_size: int = HOG_CELL, variance: float = LABEL_VARIANCE):
    patch, top, left = crop_window(to_float(item.image), item.center, size)
    feats = extract_features(power_normalize(patch), feature, cell_size)
    label = label_for(feats, (item.center[0] - top, item.center[1] - left), variance)
    return feats, label


def _feature_image(image, feature: str, cell_size: int):
    img = power_normalize(to_float(image))
    if feature == "hog":
        h, w = img.shape
        img = img[: h - h % cell_size, : w - w % cell_size]
    return extract_features(img, feature, cell_size)


def detect(filt: SpectralFilter, image, feature_mode: Optional[str] = None) -> DetectionResult:
    """Correlate ``filt`` over the whole image and return the strongest peak.

    The filter is shifted so its label peak sits at the origin and zero
    padded to the image's feature size; the response is then indexed by the
    predicted target-centre cell. Cells map to pixels as
    ``(index + 0.5) * cell_size``; ties go to the first index.
    """
    feature = feature_mode or filt.feature
    cs = filt.cell_size if feature == "hog" else 1
    feats = _feature_image(image, feature, cs)
    K, fh, fw = filt.spectra.shape
    if feats.channels != K:
        raise DimensionError(f"filter has {K} channels, features have {feats.channels}")
    H, W = feats.shape
    if H < fh or W < fw:
        raise DimensionError(f"image features {H}x{W} smaller than filter {fh}x{fw}")
    pr, pc = filt.peak
    if (H, W) == (fh, fw) and (pr, pc) == (0, 0):
        padded = filt.spectra
    else:
        template = np.roll(filt.spatial, (pr, pc), axis=(1, 2))
        big = np.zeros((K, H, W))
        big[:, :fh, :fw] = template
        padded = fft_planes(big)
    resp = np.roll(correlate_spectra(padded, feats.spectra), (pr, pc), axis=(0, 1))
    idx = int(np.argmax(resp))
    r, c = divmod(idx, W)
    if cs > 1:
        pred = ((r + 0.5) * cs, (c + 0.5) * cs)
    else:
        pred = (float(r), float(c))
    return DetectionResult(pred, float(resp.flat[idx]), resp)


def center_distances(predictions, groundtruth) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(groundtruth, dtype=np.float64).reshape(-1, 2)
    if p.shape != g.shape:
        raise ValueError(f"{len(p)} predictions but {len(g)} groundtruth positions")
    return np.linalg.norm(p - g, axis=1)


def localization_rate(predictions, groundtruth, tau: float) -> float:
    """Fraction of predictions strictly closer than ``tau`` pixels to groundtruth."""
    d = center_distances(predictions, groundtruth)
    if d.size == 0:
        raise ValueError("no predictions")
    return float(np.mean(d < tau))


def evaluate(filt: SpectralFilter, items: Sequence[LabeledImage], taus=(10,),
             noise: float = 0.0, seed: int = 0) -> LocalizationReport:
    if len(items) == 0:
        raise ValueError("empty test set")
    preds = []
    for i, item in enumerate(items):
        img = add_gaussian_noise(item.image, noise, seed=[seed, i, int(noise * 1e6)]) if noise else item.image
        preds.append(detect(filt, img).predicted)
    d = center_distances(preds, [it.center for it in items])
    return LocalizationReport(d, list(taus), [float(np.mean(d < t)) for t in taus])


# ------------------------------------------------------------------ solvers

@dataclass
class SolverConfig:
    lam: float = LAMBDA
    filter_size: tuple = FILTER_SIZE
    cell_size: int = HOG_CELL
    variance: float = LABEL_VARIANCE
    sigma0: float = dbcf_mod.SIGMA0
    eta: float = dbcf_mod.ETA
    M: Optional[int] = None
    S0: Optional[int] = None
    St: Optional[int] = None
    max_iters: int = 10
    tolerance: float = 1e-3
    distance_mode: str = "dijkstra"
    squared: bool = False
    incremental_only: bool = False
    augmentations: tuple = dbcf_mod.AUGMENTATIONS
    aug_noise: float = 0.1
    seed: int = 0


def make_augmenter(items: Sequence[LabeledImage], cfg: SolverConfig, feature: str):
    augs = tuple(cfg.augmentations)
    if not augs:
        return None

    def augment(k: int):
        item = items[k % len(items)]
        kind = augs[k % len(augs)]
        if kind == "noise":
            item = LabeledImage(np.clip(add_gaussian_noise(item.image, cfg.aug_noise, [cfg.seed, k]), 0, 1),
                                item.center, item.bbox)
        elif kind == "flip":
            item = flip_horizontal(item)
        elif kind == "affine":
            try:
                item = affine_perturb(item, seed=[cfg.seed, k])
            except ValueError:
                pass
        else:
            raise ValueError(f"unknown augmentation {kind!r}")
        return training_pair(item, feature, cfg.filter_size, cfg.cell_size, cfg.variance)

    return augment


def make_solver(method: str, cfg: SolverConfig | None = None,
                trace: list | None = None) -> Callable[[Sequence[LabeledImage]], SpectralFilter]:
    """Return ``train(items) -> SpectralFilter`` for one of asef/mosse/mccf/dbcf."""
    cfg = cfg or SolverConfig()
    if method not in METHOD_FEATURES:
        raise ValueError(f"unknown method {method!r}")
    feature = METHOD_FEATURES[method]

    def train(items):
        pairs = [training_pair(it, feature, cfg.filter_size, cfg.cell_size, cfg.variance) for it in items]
        samples = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
        if method == "asef":
            return train_asef(samples, labels)
        if method == "mosse":
            return train_mosse(samples, labels, cfg.lam)
        if method == "mccf":
            return train_mccf(samples, labels, cfg.lam)
        schedule = dbcf_mod.SubsetSchedule(cfg.S0, cfg.St, tuple(cfg.augmentations), cfg.max_iters,
                                           cfg.tolerance, cfg.incremental_only)
        return dbcf_mod.dbcf_train(samples, labels, schedule, cfg.lam, cfg.sigma0, cfg.eta, cfg.M,
                                   cfg.distance_mode, cfg.squared,
                                   augment=make_augmenter(items, cfg, feature), trace=trace)

    return train


@dataclass
class CrossValidation:
    folds: list  # fold index per item
    reports: dict = field(default_factory=dict)  # (fold, noise) -> LocalizationReport

    def mean_rates(self, noise: float = 0.0) -> list:
        rows = [r.rates for (f, n), r in sorted(self.reports.items()) if n == noise]
        return [float(v) for v in np.mean(np.array(rows), axis=0)]


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    if folds < 2 or n < folds:
        raise ValueError(f"need at least {folds} >= 2 samples for {folds}-fold validation, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=np.int64)
    assign[perm] = np.arange(n) % folds
    return assign


def cross_validate(dataset: Sequence[LabeledImage], solver, folds: int = 10, seed: int = 0,
                   taus=(10,), noise_levels=(0.0,)) -> CrossValidation:
    """Seeded k-fold evaluation; training order follows the seeded permutation."""
    assign = fold_assignment(len(dataset), folds, seed)
    order = np.random.default_rng([seed, 1]).permutation(len(dataset))
    cv = CrossValidation(assign.tolist())
    for f in range(folds):
        train = [dataset[i] for i in order if assign[i] != f]
        test = [dataset[i] for i in range(len(dataset)) if assign[i] == f]
        filt = solver(train)
        for noise in noise_levels:
            cv.reports[(f, float(noise))] = evaluate(filt, test, taus, noise, seed=seed * 1000 + f)
    return cv
