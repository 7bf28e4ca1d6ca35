import math

import cv2
import numpy as np
import pytest

from corrfilt.dataset import (DetectionSetConfig, FormatError, LabeledImage, Sequence, SequenceConfig,
                              add_gaussian_noise, affine_perturb, flip_horizontal, load_detection_set,
                              load_sequence, parse_groundtruth, save_detection_set, save_sequence,
                              synth_detection_set, synth_sequence, write_image)
from corrfilt.detection import evaluate, make_solver


def write_seq(tmp_path, n_frames, n_lines):
    (tmp_path / "img").mkdir()
    for i in range(n_frames):
        write_image(tmp_path / "img" / f"{i + 1:04d}.png", np.full((20, 30), i * 10, np.uint8))
    (tmp_path / "groundtruth_rect.txt").write_text("".join(f"{i},2,5,6\n" for i in range(n_lines)))


def test_parse_xywh():
    assert parse_groundtruth("10,20,30,40\n") == [(20.0, 10.0, 40.0, 30.0)]
    assert parse_groundtruth("10\t20\t30\t40\n\n1 2 3 4") == [(20.0, 10.0, 40.0, 30.0), (2.0, 1.0, 4.0, 3.0)]
    with pytest.raises(FormatError, match="gt:2"):
        parse_groundtruth("1,2,3,4\n1,2,3\n", "gt")


def test_load_sequence(tmp_path):
    write_seq(tmp_path, 3, 3)
    seq = load_sequence(tmp_path)
    assert len(seq) == 3 and seq.resolution == (30, 20)
    assert seq.groundtruth[1] == (2.0, 1.0, 6.0, 5.0)
    assert seq.frames[2][0, 0] == 20


def test_load_sequence_count_mismatch(tmp_path):
    write_seq(tmp_path, 3, 2)
    with pytest.raises(FormatError, match=r"groundtruth_rect.txt:3"):
        load_sequence(tmp_path)


def test_unreadable_image(tmp_path):
    write_seq(tmp_path, 2, 2)
    (tmp_path / "img" / "0002.png").write_bytes(b"not a png")
    with pytest.raises(OSError, match="0002.png"):
        load_sequence(tmp_path)


def test_sequence_roundtrip(tmp_path):
    seq = synth_sequence(SequenceConfig(length=4, width=120, height=100, target_size=(20, 20)), seed=3)
    back = load_sequence(save_sequence(seq, tmp_path / "s"))
    assert all(np.array_equal(a, b) for a, b in zip(seq.frames, back.frames))
    assert back.groundtruth == seq.groundtruth


def test_detection_set_roundtrip(tmp_path):
    items = synth_detection_set(DetectionSetConfig(count=4), seed=1)
    back = load_detection_set(save_detection_set(items, tmp_path))
    assert [b.center for b in back] == [i.center for i in items]
    assert all(np.array_equal(a.image, b.image) for a, b in zip(items, back))


def test_labeled_image_validates_center():
    with pytest.raises(ValueError):
        LabeledImage(np.zeros((10, 10)), (10, 3))


def test_sequence_validates():
    with pytest.raises(FormatError):
        Sequence([np.zeros((4, 4))], [])


def test_detection_set_deterministic_and_flipped():
    a = synth_detection_set(DetectionSetConfig(count=6), seed=7)
    b = synth_detection_set(DetectionSetConfig(count=6), seed=7)
    assert all(x.image.tobytes() == y.image.tobytes() and x.center == y.center for x, y in zip(a, b))
    for base, mirror in zip(a[:3], a[3:]):
        np.testing.assert_array_equal(mirror.image, base.image[:, ::-1])
    c = synth_detection_set(DetectionSetConfig(count=6), seed=8)
    assert a[0].image.tobytes() != c[0].image.tobytes()


def test_detection_set_shapes():
    items = synth_detection_set(DetectionSetConfig(count=268), seed=0)
    assert len(items) == 268
    for it in items:
        h, w = it.image.shape
        assert 150 <= h <= 200 and w == 200 and h % 5 == 0 and it.image.dtype == np.uint8


def test_flat_background_self_detects():
    cfg = DetectionSetConfig(count=6, clutter_density=0.0, illumination=False)
    items = synth_detection_set(cfg, seed=2)
    filt = make_solver("mccf")(items)
    assert evaluate(filt, items, taus=(10,)).rates == [1.0]


def test_static_sequence():
    cfg = SequenceConfig(length=5, velocity=(0, 0), jitter=0, noise_schedule=(), sensor_noise=0)
    seq = synth_sequence(cfg, seed=1)
    assert len(set(seq.groundtruth)) == 1
    assert all(np.array_equal(f, seq.frames[0]) for f in seq.frames)


def test_sequence_deterministic():
    cfg = SequenceConfig(length=5, width=160, height=120, target_size=(20, 20))
    a, b = synth_sequence(cfg, seed=4), synth_sequence(cfg, seed=4)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.frames, b.frames))
    assert a.groundtruth == b.groundtruth


def test_occlusion_schedule():
    base = dict(length=55, velocity=(0, 0), jitter=0, noise_schedule=(), sensor_noise=0)
    clean = synth_sequence(SequenceConfig(**base), seed=5)
    occ = synth_sequence(SequenceConfig(**base, occlusions=((40, 50),)), seed=5)
    r, c, h, w = (int(v) for v in clean.groundtruth[0])
    for k in range(55):
        same = np.array_equal(occ.frames[k][r:r + h, c:c + w], clean.frames[k][r:r + h, c:c + w])
        assert same != (40 <= k <= 50)


def test_noise_statistics():
    clean = np.full((200, 200), 0.5)
    noisy = add_gaussian_noise(clean, 0.3, seed=0)
    assert abs(np.std(noisy - clean) - 0.3) < 0.01
    np.testing.assert_array_equal(add_gaussian_noise(clean, 0.0, seed=0), clean)
    assert not np.array_equal(add_gaussian_noise(clean, 0.3, seed=1), noisy)


def test_flip():
    rng = np.random.default_rng(0)
    item = LabeledImage(rng.uniform(size=(8, 11)), (2.0, 3.0))
    flipped = flip_horizontal(item)
    assert flipped.center == (2.0, 7.0)
    twice = flip_horizontal(flipped)
    np.testing.assert_array_equal(twice.image, item.image)
    assert twice.center == item.center


def test_rotation_center():
    img = np.zeros((101, 121), np.uint8)
    item = LabeledImage(img, (30.0, 40.0))
    out = affine_perturb(item, rotation_deg=5.0, scale=1.0)
    th = math.radians(5.0)
    cx, cy = 60.0, 50.0
    dx, dy = 40.0 - cx, 30.0 - cy
    # image-coordinate rotation (y down), counter-clockwise as displayed
    x = cx + math.cos(th) * dx + math.sin(th) * dy
    y = cy - math.sin(th) * dx + math.cos(th) * dy
    assert abs(out.center[0] - y) < 0.5 and abs(out.center[1] - x) < 0.5


def test_rotation_moves_content_with_center():
    img = np.zeros((101, 121), np.float64)
    cv2.circle(img, (40, 30), 3, 1.0, -1)
    out = affine_perturb(LabeledImage(img, (30.0, 40.0)), rotation_deg=5.0, scale=1.03)
    rr, cc = np.unravel_index(np.argmax(cv2.GaussianBlur(out.image, (7, 7), 2)), out.image.shape)
    assert math.hypot(rr - out.center[0], cc - out.center[1]) <= 1.0


def test_affine_center_leaving_image():
    item = LabeledImage(np.zeros((50, 50)), (0.0, 0.0))
    with pytest.raises(ValueError):
        affine_perturb(item, rotation_deg=0.0, scale=1.1)
