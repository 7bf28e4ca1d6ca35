"""Frame-by-frame correlation-filter tracker with optional DBCF correction,
and OTB-style precision/success evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dbcf as dbcf_mod
from .dataset import Sequence, box_center, to_float
from .detection import crop_window
from .features import LABEL_VARIANCE, HOG_CELL, extract_features, gaussian_response, power_normalize
from .solvers import LAMBDA, SpectralFilter, normal_terms, solve_bins
from .spectral import correlate_spectra

PADDING = 1.5
RHO = 0.1
PRECISION_THRESHOLDS = tuple(range(0, 51))
SUCCESS_THRESHOLDS = tuple(np.round(np.linspace(0, 1, 21), 2))


@dataclass
class TrackConfig:
    padding: float = PADDING
    rho: float = RHO
    lam: float = LAMBDA
    sigma: float = dbcf_mod.SIGMA0
    feature: str = "hog"
    cell_size: int = HOG_CELL
    variance: float = LABEL_VARIANCE
    dbcf: bool = True
    buffer: int = 5
    M: Optional[int] = None
    distance_mode: str = "dijkstra"
    squared: bool = False
    cosine_window: bool = True

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.padding <= 1:
            raise ValueError("padding must exceed 1")


@dataclass(eq=False)
class TrackState:
    gram: np.ndarray  # (H, W, K, K) interpolated per-bin Gram matrices
    rhs: np.ndarray  # (H, W, K)
    filter: SpectralFilter
    position: np.ndarray  # (row, col) target centre
    target_size: tuple  # (h, w)
    window: tuple  # template size in pixels (h, w)
    label: np.ndarray  # label spectrum at feature resolution
    space: dbcf_mod.ReconstructionSpace
    frame_shape: tuple
    cfg: TrackConfig
    hann: Optional[np.ndarray] = None


def _template_size(target_size, padding, cs):
    return tuple(max(cs, int(round(s * padding / cs)) * cs) for s in target_size)


def _features(cfg, frame, center, window, hann):
    patch, _, _ = crop_window(frame, center, window)
    feats = extract_features(power_normalize(patch), cfg.feature, cfg.cell_size)
    if hann is not None:
        feats.planes = feats.planes * hann[None]
    return feats


def _cell(cfg):
    return cfg.cell_size if cfg.feature == "hog" else 1


def init_track(first_frame, bbox, cfg: TrackConfig | None = None) -> TrackState:
    """Train the initial (pure MCCF) model on a padded window around ``bbox``."""
    cfg = cfg or TrackConfig()
    frame = to_float(first_frame)
    H, W = frame.shape
    r, c, h, w = bbox
    if r < 0 or c < 0 or h <= 0 or w <= 0 or r + h > H or c + w > W:
        raise ValueError(f"bbox {bbox} outside {H}x{W} frame")
    cs = _cell(cfg)
    window = _template_size((h, w), cfg.padding, cs)
    fh, fw = window[0] // cs, window[1] // cs
    hann = np.outer(np.hanning(fh), np.hanning(fw)) if cfg.cosine_window else None
    label = gaussian_response(fw, fh, (fh // 2, fw // 2), cfg.variance)
    center = np.array(box_center(bbox))
    feats = _features(cfg, frame, center, window, hann)
    gram, rhs = normal_terms(feats.spectra[None], label.spectrum[None])
    filt = SpectralFilter(solve_bins(gram, rhs, cfg.lam), method="dbcf" if cfg.dbcf else "mccf",
                          feature=cfg.feature, cell_size=cs, peak=label.peak)
    space = dbcf_mod.ReconstructionSpace([filt], M=cfg.M, max_len=cfg.buffer)
    return TrackState(gram, rhs, filt, center, (h, w), window, label.spectrum, space,
                      (H, W), cfg, hann)


def _subcell(resp, r, c):
    """Parabolic peak refinement along each axis (wrap-around neighbours)."""
    H, W = resp.shape
    out = []
    for lo, mid, hi in ((resp[(r - 1) % H, c], resp[r, c], resp[(r + 1) % H, c]),
                        (resp[r, (c - 1) % W], resp[r, c], resp[r, (c + 1) % W])):
        den = lo - 2 * mid + hi
        out.append(0.0 if den >= 0 else float(np.clip(0.5 * (lo - hi) / den, -0.5, 0.5)))
    return out


def track_step(state: TrackState, frame) -> tuple[np.ndarray, float]:
    """Locate the target in ``frame``; updates and returns ``state.position``."""
    cfg = state.cfg
    frame = to_float(frame)
    feats = _features(cfg, frame, state.position, state.window, state.hann)
    resp = correlate_spectra(state.filter.spectra, feats.spectra)
    idx = int(np.argmax(resp))
    H, W = resp.shape
    r, c = divmod(idx, W)
    peak = float(resp.flat[idx])
    if not np.any(resp):
        return state.position, peak
    dr_sub, dc_sub = _subcell(resp, r, c)
    pr, pc = state.filter.peak
    dr = (r - pr + H // 2) % H - H // 2 + dr_sub
    dc = (c - pc + W // 2) % W - W // 2 + dc_sub
    cs = _cell(cfg)
    pos = state.position + np.array([dr, dc]) * cs
    fh, fw = state.frame_shape
    state.position = np.clip(pos, [0, 0], [fh - 1, fw - 1])
    return state.position, peak


def model_update(state: TrackState, frame, dbcf_enabled: Optional[bool] = None) -> TrackState:
    """Fold the frame at the current position into the model.

    The per-frame system ``(x x^H, x conj(y))`` is, when DBCF is on, augmented
    with the penalty towards the projection of the per-frame filter onto the
    recent sub-filters: ``(x x^H + sigma I, x conj(y) + sigma F')``. The
    accumulators are then blended with weight ``rho``.
    """
    cfg = state.cfg
    use_dbcf = cfg.dbcf if dbcf_enabled is None else dbcf_enabled
    frame = to_float(frame)
    feats = _features(cfg, frame, state.position, state.window, state.hann)
    g_new, r_new = normal_terms(feats.spectra[None], state.label[None])
    if use_dbcf:
        f_frame = state.filter.like(solve_bins(g_new, r_new, cfg.lam))
        f_prime = dbcf_mod.reconstruct_projection(f_frame, state.space, cfg.distance_mode, cfg.squared)
        K = g_new.shape[-1]
        g_new = g_new + cfg.sigma * np.eye(K)
        r_new = r_new + cfg.sigma * np.moveaxis(f_prime.spectra, 0, -1)
        state.space.append(f_frame)
    rho = cfg.rho
    if rho:
        state.gram = (1 - rho) * state.gram + rho * g_new
        state.rhs = (1 - rho) * state.rhs + rho * r_new
        state.filter = state.filter.like(solve_bins(state.gram, state.rhs, cfg.lam))
    return state


@dataclass
class TrackReport:
    centers: np.ndarray
    errors: np.ndarray
    overlaps: np.ndarray
    precision: np.ndarray  # (thresholds, fraction)
    success: np.ndarray
    fps: float
    name: str = ""

    def precision_at(self, threshold: float = 20) -> float:
        return float(np.mean(self.errors <= threshold))


def run_tracker(seq: Sequence, cfg: TrackConfig | None = None) -> TrackReport:
    """Track a whole sequence from its first groundtruth box.

    FPS counts tracking time only; frames are decoded before the clock starts.
    """
    cfg = cfg or TrackConfig()
    frames = [to_float(f) for f in seq.frames]
    t0 = time.perf_counter()
    state = init_track(frames[0], seq.groundtruth[0], cfg)
    centers = [state.position.copy()]
    for frame in frames[1:]:
        pos, _ = track_step(state, frame)
        centers.append(pos.copy())
        model_update(state, frame)
    elapsed = time.perf_counter() - t0
    centers = np.array(centers)
    gt_centers = seq.centers()
    h, w = state.target_size
    pred_boxes = np.column_stack([centers[:, 0] - h / 2, centers[:, 1] - w / 2,
                                  np.full(len(centers), h), np.full(len(centers), w)])
    errors = np.linalg.norm(centers - gt_centers, axis=1)
    overlaps = iou(pred_boxes, np.asarray(seq.groundtruth, dtype=np.float64))
    return TrackReport(centers, errors, overlaps,
                       precision_curve(centers, gt_centers),
                       success_curve(pred_boxes, seq.groundtruth),
                       len(frames) / elapsed if elapsed > 0 else float("inf"), seq.name)


def iou(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    r0 = np.maximum(a[:, 0], b[:, 0])
    c0 = np.maximum(a[:, 1], b[:, 1])
    r1 = np.minimum(a[:, 0] + a[:, 2], b[:, 0] + b[:, 2])
    c1 = np.minimum(a[:, 1] + a[:, 3], b[:, 1] + b[:, 3])
    inter = np.clip(r1 - r0, 0, None) * np.clip(c1 - c0, 0, None)
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def precision_curve(predicted, groundtruth, thresholds=PRECISION_THRESHOLDS) -> np.ndarray:
    """Rows ``(threshold, fraction of frames with centre error <= threshold)``."""
    p = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(groundtruth, dtype=np.float64).reshape(-1, 2)
    if p.shape != g.shape:
        raise ValueError(f"{len(p)} predictions but {len(g)} groundtruth centres")
    err = np.linalg.norm(p - g, axis=1)
    th = np.asarray(thresholds, dtype=np.float64)
    return np.column_stack([th, (err[None, :] <= th[:, None]).mean(axis=1)])


def success_curve(predicted_boxes, gt_boxes, thresholds=SUCCESS_THRESHOLDS) -> np.ndarray:
    """Rows ``(iou threshold, fraction of frames with IoU > threshold)``."""
    ov = iou(predicted_boxes, gt_boxes)
    th = np.asarray(thresholds, dtype=np.float64)
    return np.column_stack([th, (ov[None, :] > th[:, None]).mean(axis=1)])
