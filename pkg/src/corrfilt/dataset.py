"""Image/sequence I/O, synthetic benchmarks and augmentation operators.

Groundtruth text files hold one ``x,y,w,h`` line per frame (x = column of
the top-left corner). In memory boxes are ``(row, col, h, w)``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

IMAGE_EXTS = (".png", ".pgm")
GT_NAMES = ("groundtruth_rect.txt", "groundtruth.txt")


class FormatError(ValueError):
    pass


@dataclass(eq=False)
class LabeledImage:
    image: np.ndarray  # uint8 or float in [0, 1], (H, W)
    center: tuple[float, float]  # (row, col)
    bbox: Optional[tuple[float, float, float, float]] = None  # (row, col, h, w)

    def __post_init__(self):
        h, w = self.image.shape[:2]
        r, c = self.center
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"center {self.center} outside {h}x{w} image")


@dataclass(eq=False)
class Sequence:
    frames: list
    groundtruth: list  # (row, col, h, w) per frame
    name: str = "sequence"

    def __post_init__(self):
        if len(self.frames) != len(self.groundtruth):
            raise FormatError(f"{len(self.frames)} frames but {len(self.groundtruth)} boxes")
        if self.frames:
            shape = self.frames[0].shape
            if any(f.shape != shape for f in self.frames):
                raise FormatError("frames differ in resolution")

    def __len__(self):
        return len(self.frames)

    @property
    def resolution(self) -> tuple[int, int]:
        """(width, height)."""
        h, w = self.frames[0].shape[:2]
        return w, h

    def centers(self) -> np.ndarray:
        return np.array([box_center(b) for b in self.groundtruth])


def box_center(bbox) -> tuple[float, float]:
    r, c, h, w = bbox
    return r + h / 2.0, c + w / 2.0


def to_float(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def to_uint8(image) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- file I/O

def read_image(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise OSError(f"cannot read image {path}")
    return img


def write_image(path, image) -> None:
    arr = image if np.asarray(image).dtype == np.uint8 else to_uint8(image)
    if not cv2.imwrite(str(path), arr):
        raise OSError(f"cannot write image {path}")


def parse_groundtruth(text: str, source: str = "groundtruth") -> list:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace("\t", ",").replace(" ", ",").split(",")
        parts = [p for p in parts if p]
        try:
            x, y, w, h = (float(p) for p in parts)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: expected 'x,y,w,h', got {line!r}") from None
        boxes.append((y, x, h, w))
    return boxes


def format_groundtruth(boxes) -> str:
    return "".join(f"{c:g},{r:g},{w:g},{h:g}\n" for r, c, h, w in boxes)


def _frame_files(path: Path) -> list:
    img_dir = path / "img" if (path / "img").is_dir() else path
    return sorted(p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS)


def load_sequence(path) -> Sequence:
    path = Path(path)
    gt_path = next((path / n for n in GT_NAMES if (path / n).exists()), None)
    if gt_path is None:
        raise FormatError(f"{path}: no groundtruth file ({' or '.join(GT_NAMES)})")
    boxes = parse_groundtruth(gt_path.read_text(), str(gt_path))
    files = _frame_files(path)
    if len(files) != len(boxes):
        line = min(len(files), len(boxes)) + 1
        raise FormatError(
            f"{gt_path}:{line}: {len(files)} frames but {len(boxes)} groundtruth lines")
    frames = [read_image(f) for f in files]
    return Sequence(frames, boxes, name=path.name)


def save_sequence(seq: Sequence, path) -> Path:
    path = Path(path)
    (path / "img").mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames, 1):
        write_image(path / "img" / f"{i:05d}.png", frame)
    (path / GT_NAMES[0]).write_text(format_groundtruth(seq.groundtruth))
    return path


def save_detection_set(items, path) -> Path:
    path = Path(path)
    (path / "images").mkdir(parents=True, exist_ok=True)
    rows = ["file\tcenter_row\tcenter_col"]
    for i, item in enumerate(items):
        name = f"images/{i:04d}.png"
        write_image(path / name, item.image)
        rows.append(f"{name}\t{item.center[0]:g}\t{item.center[1]:g}")
    (path / "manifest.tsv").write_text("\n".join(rows) + "\n")
    return path


def load_detection_set(path) -> list:
    path = Path(path)
    manifest = path / "manifest.tsv"
    if not manifest.exists():
        raise FormatError(f"{path}: missing manifest.tsv")
    items = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if lineno == 1 or not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{manifest}:{lineno}: expected 3 tab-separated fields")
        items.append(LabeledImage(read_image(path / parts[0]), (float(parts[1]), float(parts[2]))))
    return items


def load_manifest(path) -> list:
    """Sequence directories listed one per line (relative to the manifest)."""
    path = Path(path)
    base = path.parent
    return [base / line.strip() for line in path.read_text().splitlines()
            if line.strip() and not line.startswith("#")]


# ------------------------------------------------------------ augmentation

def add_gaussian_noise(image, sigma_n: float, seed=None) -> np.ndarray:
    """Add i.i.d. N(0, sigma_n^2) noise in [0, 1] intensity units (no clipping)."""
    if sigma_n < 0:
        raise ValueError("sigma_n must be >= 0")
    img = to_float(image)
    if sigma_n == 0:
        return img
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma_n, img.shape)


def flip_horizontal(item: LabeledImage) -> LabeledImage:
    w = item.image.shape[1]
    r, c = item.center
    bbox = None
    if item.bbox is not None:
        br, bc, bh, bw = item.bbox
        bbox = (br, w - bc - bw, bh, bw)
    return LabeledImage(np.ascontiguousarray(item.image[:, ::-1]), (r, w - 1 - c), bbox)


def affine_perturb(item: LabeledImage, rotation_deg: Optional[float] = None,
                   scale: Optional[float] = None, seed=None) -> LabeledImage:
    """Rotate/scale about the image centre; unspecified parameters are drawn
    uniformly from +-5 degrees and +-5 % using ``seed``."""
    rng = np.random.default_rng(seed)
    if rotation_deg is None:
        rotation_deg = rng.uniform(-5.0, 5.0)
    if scale is None:
        scale = rng.uniform(0.95, 1.05)
    h, w = item.image.shape[:2]
    mat = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), rotation_deg, scale)
    src = item.image if item.image.dtype == np.uint8 else item.image.astype(np.float32)
    warped = cv2.warpAffine(src, mat, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)
    if item.image.dtype != np.uint8:
        warped = warped.astype(item.image.dtype)
    r, c = item.center
    nc, nr = mat @ np.array([c, r, 1.0])
    if not (0 <= nr < h and 0 <= nc < w):
        raise ValueError(f"transformed center ({nr:.1f}, {nc:.1f}) leaves the image")
    return LabeledImage(warped, (float(nr), float(nc)), item.bbox)


# --------------------------------------------------------------- synthesis

def _part_template(size: int, seed: int) -> np.ndarray:
    """A machined-part-like pattern in [0, 1]: plate, bore, bolt holes, slot."""
    rng = np.random.default_rng(seed)
    t = np.zeros((size, size), np.float32)
    c = size / 2.0
    cv2.rectangle(t, (2, 2), (size - 3, size - 3), 0.55, -1)
    cv2.circle(t, (int(c), int(c)), int(size * 0.3), 0.95, -1)
    cv2.circle(t, (int(c), int(c)), int(size * 0.14), 0.1, -1)
    for dx, dy in ((0.18, 0.18), (0.82, 0.18), (0.18, 0.82), (0.82, 0.82)):
        cv2.circle(t, (int(dx * size), int(dy * size)), max(2, size // 16), 0.15, -1)
    y0 = int(size * (0.75 + 0.05 * rng.uniform()))
    cv2.rectangle(t, (int(size * 0.35), y0), (int(size * 0.65), min(size - 4, y0 + 3)), 0.2, -1)
    return t.astype(np.float64)


def _clutter(img: np.ndarray, rng, n_shapes: int) -> None:
    h, w = img.shape
    for _ in range(n_shapes):
        val = float(rng.uniform(0.05, 0.95))
        x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
        sx, sy = int(rng.integers(4, 30)), int(rng.integers(4, 30))
        if rng.uniform() < 0.5:
            cv2.rectangle(img, (x, y), (x + sx, y + sy), val, -1)
        else:
            cv2.ellipse(img, (x, y), (sx // 2 + 1, sy // 2 + 1), float(rng.uniform(0, 180)), 0, 360, val, -1)


def _paste(img: np.ndarray, patch: np.ndarray, top: int, left: int, mask: Optional[np.ndarray] = None):
    h, w = img.shape
    ph, pw = patch.shape
    r0, c0 = max(top, 0), max(left, 0)
    r1, c1 = min(top + ph, h), min(left + pw, w)
    if r0 >= r1 or c0 >= c1:
        return
    sub = patch[r0 - top:r1 - top, c0 - left:c1 - left]
    if mask is None:
        img[r0:r1, c0:c1] = sub
    else:
        m = mask[r0 - top:r1 - top, c0 - left:c1 - left]
        img[r0:r1, c0:c1] = np.where(m, sub, img[r0:r1, c0:c1])


@dataclass
class DetectionSetConfig:
    count: int = 268
    height_range: tuple = (150, 200)
    width: int = 200
    target_size: int = 40
    clutter_density: float = 1.0  # shapes per 1000 pixels
    illumination: bool = True
    target_jitter: bool = True  # small per-image rotation/scale of the part
    sensor_noise: float = 0.02
    flips: bool = True
    template_seed: int = 1234


def synth_detection_set(config: DetectionSetConfig | None = None, seed: int = 0) -> list:
    """Deterministic labelled images, each containing one part at a recorded centre.

    With ``flips`` the first ``ceil(count/2)`` images are generated and the
    rest are their horizontal mirrors.
    """
    cfg = config or DetectionSetConfig()
    if cfg.count < 1:
        raise ValueError("count must be >= 1")
    n_base = math.ceil(cfg.count / 2) if cfg.flips else cfg.count
    template = _part_template(cfg.target_size, cfg.template_seed)
    ts = cfg.target_size
    items = []
    for i in range(n_base):
        rng = np.random.default_rng([seed, i])
        lo, hi = cfg.height_range
        h = int(rng.integers(lo // 5, hi // 5 + 1)) * 5
        w = cfg.width
        img = np.full((h, w), 0.45, np.float32)
        if cfg.clutter_density > 0:
            yy, xx = np.mgrid[0:h, 0:w]
            g = rng.normal(0, 1, 3)
            img += (0.08 * (g[0] * (yy / h - 0.5) + g[1] * (xx / w - 0.5))).astype(np.float32)
            _clutter(img, rng, int(round(cfg.clutter_density * h * w / 1000)))
        part = template
        if cfg.target_jitter:
            mat = cv2.getRotationMatrix2D(((ts - 1) / 2, (ts - 1) / 2), rng.uniform(-8, 8), rng.uniform(0.93, 1.07))
            part = cv2.warpAffine(template.astype(np.float32), mat, (ts, ts), flags=cv2.INTER_LINEAR,
                                  borderValue=-1.0).astype(np.float64)
        mask = part >= 0
        margin = 30
        cr = float(rng.integers(margin, h - margin))
        cc = float(rng.integers(margin, w - margin))
        top, left = int(cr) - ts // 2, int(cc) - ts // 2
        _paste(img, part.astype(np.float32), top, left, mask)
        if cfg.illumination:
            gain, offset = rng.uniform(0.6, 1.3), rng.uniform(-0.15, 0.15)
            img = img * gain + offset
        if cfg.sensor_noise > 0:
            img = img + rng.normal(0, cfg.sensor_noise, img.shape)
        bbox = (float(top), float(left), float(ts), float(ts))
        items.append(LabeledImage(to_uint8(img), (cr, cc), bbox))
    if cfg.flips:
        items += [flip_horizontal(it) for it in items[: cfg.count - n_base]]
    return items


@dataclass
class SequenceConfig:
    length: int = 100
    width: int = 640
    height: int = 480
    target_size: tuple = (40, 40)  # (h, w)
    velocity: Optional[tuple] = None  # (drow, dcol) px/frame; None draws ~2 px/frame
    jitter: float = 0.5
    noise_schedule: tuple = ((30, 60, 0.3),)  # (first, last, sigma) inclusive frames
    occlusions: tuple = ()  # (first, last) inclusive frames
    clutter_density: float = 0.3
    sensor_noise: float = 0.01
    name: str = "synthetic"


def _texture(rng, shape, coarse) -> np.ndarray:
    small = rng.uniform(0, 1, coarse).astype(np.float32)
    return cv2.resize(small, (shape[1], shape[0]), interpolation=cv2.INTER_CUBIC).astype(np.float64)


def synth_sequence(config: SequenceConfig | None = None, seed: int = 0) -> Sequence:
    """Textured target drifting over a cluttered static background."""
    cfg = config or SequenceConfig()
    rng = np.random.default_rng([seed, 7919])
    H, W = cfg.height, cfg.width
    th, tw = cfg.target_size
    bg = 0.25 + 0.5 * _texture(rng, (H, W), (H // 40, W // 40))
    bg = bg.astype(np.float32)
    _clutter(bg, rng, int(round(cfg.clutter_density * H * W / 1000)))
    bg = bg.astype(np.float64)
    target = _texture(rng, (th, tw), (6, 6))
    target = np.where(target > 0.5, 0.9, 0.1) * 0.8 + 0.2 * target
    target[:2, :] = target[-2:, :] = 0.0
    target[:, :2] = target[:, -2:] = 0.0
    occluder = np.full((th + 10, tw + 10), 0.5) + 0.1 * _texture(rng, (th + 10, tw + 10), (3, 3))

    if cfg.velocity is None:
        ang = rng.uniform(0, 2 * np.pi)
        vel = np.array([np.sin(ang), np.cos(ang)]) * 2.0
    else:
        vel = np.asarray(cfg.velocity, dtype=np.float64)
    pos = np.array([rng.uniform(H * 0.3, H * 0.7), rng.uniform(W * 0.3, W * 0.7)])
    lo = np.array([th / 2 + 2, tw / 2 + 2])
    hi = np.array([H - th / 2 - 2, W - tw / 2 - 2])

    frames, boxes = [], []
    for k in range(cfg.length):
        if k > 0:
            step = vel + (rng.normal(0, cfg.jitter, 2) if cfg.jitter > 0 else 0.0)
            pos = pos + step
            for a in range(2):
                if pos[a] < lo[a] or pos[a] > hi[a]:
                    vel[a] = -vel[a]
                    pos[a] = np.clip(pos[a], lo[a], hi[a])
        top, left = int(round(pos[0] - th / 2)), int(round(pos[1] - tw / 2))
        img = bg.copy()
        _paste(img, target, top, left)
        if any(a <= k <= b for a, b in cfg.occlusions):
            _paste(img, occluder, top - 5, left - 5)
        noise = cfg.sensor_noise
        for a, b, s in cfg.noise_schedule:
            if a <= k <= b:
                noise = math.hypot(noise, s)
        if noise > 0:
            img = img + rng.normal(0, noise, img.shape)
        frames.append(to_uint8(img))
        boxes.append((float(top), float(left), float(th), float(tw)))
    return Sequence(frames, boxes, name=cfg.name)
