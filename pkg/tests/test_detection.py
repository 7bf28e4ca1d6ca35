import numpy as np
import pytest

from corrfilt.dataset import DetectionSetConfig, LabeledImage, synth_detection_set
from corrfilt.detection import (SolverConfig, crop_window, cross_validate, detect, evaluate, fold_assignment,
                                localization_rate, make_solver, training_pair)
from corrfilt.solvers import SpectralFilter
from corrfilt.spectral import DimensionError


@pytest.fixture(scope="module")
def items():
    return synth_detection_set(DetectionSetConfig(count=20), seed=3)


def test_crop_window_edge_padding():
    img = np.arange(25.0).reshape(5, 5)
    patch, top, left = crop_window(img, (0, 0), (4, 4))
    assert (top, left) == (-2, -2) and patch.shape == (4, 4)
    assert patch[0, 0] == img[0, 0] and patch[3, 3] == img[1, 1]


def test_training_pair_label_peak(items):
    feats, label = training_pair(items[0])
    assert feats.planes.shape == (5, 12, 12)
    assert label.peak == (6, 6)


@pytest.mark.parametrize("method", ["mccf", "mosse", "asef", "dbcf"])
def test_self_detection(items, method):
    item = items[0]
    filt = make_solver(method, SolverConfig(max_iters=0))([item])
    res = detect(filt, item.image)
    cell = filt.cell_size if filt.feature == "hog" else 1
    assert np.hypot(res.predicted[0] - item.center[0], res.predicted[1] - item.center[1]) <= np.hypot(cell, cell)


def test_zero_filter():
    filt = SpectralFilter(np.zeros((1, 60, 60), complex), "mosse", "intensity", 1, (30, 30))
    res = detect(filt, np.random.default_rng(0).uniform(size=(80, 90)))
    assert res.peak_value == 0.0 and res.predicted == (0.0, 0.0)


@pytest.mark.parametrize("method,shift", [("mosse", (7, -11)), ("mccf", (10, -15))])
def test_shift_equivariance(items, method, shift):
    item = items[1]
    filt = make_solver(method)(items[:6])
    h, w = item.image.shape
    a = detect(filt, item.image).predicted
    b = detect(filt, np.roll(item.image, shift, axis=(0, 1))).predicted
    cell = filt.cell_size if filt.feature == "hog" else 1
    dr = (b[0] - a[0] - shift[0] + h / 2) % h - h / 2
    dc = (b[1] - a[1] - shift[1] + w / 2) % w - w / 2
    assert abs(dr) <= cell and abs(dc) <= cell


def test_detect_errors(items):
    filt = make_solver("mccf")(items[:2])
    with pytest.raises(DimensionError):
        detect(filt, np.zeros((40, 40)))
    with pytest.raises(DimensionError):
        detect(filt, items[0].image, feature_mode="intensity")


def test_localization_rate_fixtures():
    g = [(0, 0), (10, 10), (5, 5), (20, 0)]
    assert localization_rate(g, g, 1) == 1.0
    assert localization_rate([(100, 100)] * 4, g, 10) == 0.0
    assert localization_rate([(0, 3), (10, 10), (5, 25), (40, 0)], g, 5) == 0.5
    assert localization_rate([(0, 5)], [(0, 0)], 5) == 0.0  # strict inequality
    with pytest.raises(ValueError):
        localization_rate(g[:2], g, 5)


def test_localization_monotone_in_tau():
    rng = np.random.default_rng(0)
    p, g = rng.normal(size=(50, 2)) * 10, np.zeros((50, 2))
    rates = [localization_rate(p, g, t) for t in range(0, 40)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_fold_structure():
    assign = fold_assignment(10, 10, seed=1)
    assert sorted(assign.tolist()) == list(range(10))
    assign = fold_assignment(268, 10, seed=1)
    assert set(np.bincount(assign)) <= {26, 27}
    with pytest.raises(ValueError):
        fold_assignment(5, 10, seed=0)


def test_cross_validation_deterministic(items):
    solver = make_solver("mosse")
    a = cross_validate(items, solver, folds=4, seed=2, taus=(5, 10), noise_levels=(0.0, 0.3))
    b = cross_validate(items, solver, folds=4, seed=2, taus=(5, 10), noise_levels=(0.0, 0.3))
    assert a.folds == b.folds
    for key in a.reports:
        np.testing.assert_array_equal(a.reports[key].distances, b.reports[key].distances)
    assert len(a.reports) == 8
    means = a.mean_rates(0.0)
    manual = np.mean([a.reports[(f, 0.0)].rates for f in range(4)], axis=0)
    np.testing.assert_allclose(means, manual)
    assert all(0 <= r <= 1 for r in means)


def test_noise_does_not_help(items):
    filt = make_solver("mccf")(items[:14])
    clean = evaluate(filt, items[14:], taus=(10,), noise=0.0).rates[0]
    noisy = evaluate(filt, items[14:], taus=(10,), noise=0.5, seed=1).rates[0]
    assert noisy <= clean


def test_unknown_method():
    with pytest.raises(ValueError):
        make_solver("kcf")
    with pytest.raises(ValueError):
        evaluate(SpectralFilter(np.zeros((1, 4, 4), complex), "mosse", "intensity"), [])
