import math

import numpy as np
import pytest
from scipy import stats

from renewal_strings.catalog import Bounds, write_catalog
from renewal_strings.density import DensityGrid
from renewal_strings.errors import ConfigError
from renewal_strings.generator import (
    GeneratorConfig, TrackClass, _TrackSink, _walk, forced_track, gradient_grid, sample_background,
    sample_plate, sample_tracks,
)

SMALL = Bounds(0.0, 20_000.0, 0.0, 20_000.0)
# short-lived classes keep the lead-in (and the test runtime) small
QUICK = (TrackClass(360.0, 0.05, 0.8), TrackClass(1500.0, 0.05, 0.5))


def test_zero_rate_gives_no_points():
    cfg = GeneratorConfig(bounds=SMALL, background=0.0, birth_mean=math.inf)
    assert len(sample_plate(cfg)) == 0


def test_background_count_mean_over_seeds():
    lam = 2e-6
    cfg = GeneratorConfig(bounds=SMALL, background=DensityGrid(4, 4, SMALL, np.full((4, 4), lam)))
    mu = lam * SMALL.area
    counts = np.array([len(sample_background(cfg, np.random.default_rng(s))) for s in range(1000)])
    assert abs(counts.mean() - mu) < 3 * math.sqrt(mu / 1000)
    # Poisson: variance equals mean, dispersion index near one
    disp = counts.var(ddof=1) / counts.mean()
    assert abs(disp - 1) < 3 * math.sqrt(2 / 999)


def test_two_boxes_rate_ratio():
    lam = 1e-6
    grid = DensityGrid(2, 1, SMALL, np.array([[lam], [2 * lam]]))
    cfg = GeneratorConfig(bounds=SMALL, background=grid)
    left = right = 0
    for s in range(200):
        cat = sample_background(cfg, np.random.default_rng(s))
        left += np.count_nonzero(cat.x < 10_000)
        right += np.count_nonzero(cat.x >= 10_000)
    assert right / left == pytest.approx(2.0, rel=0.05)


def test_gradient_grid_total_and_ratio():
    g = gradient_grid(SMALL, 1e4, 2.0, nx=10, ny=5)
    assert (g.rates * g.box_area).sum() == pytest.approx(1e4)
    assert g.rates[-1, 0] / g.rates[0, 0] == pytest.approx(2.0)


def test_infinite_birth_mean_gives_no_tracks():
    cfg = GeneratorConfig(bounds=SMALL, birth_mean=math.inf, n_angles=50)
    plate = sample_plate(cfg)
    assert len(plate) > 0
    assert np.all(plate.labels == 0)


def test_forced_track_count_and_gap_mean():
    counts, gaps = [], []
    b = Bounds(0, 1e5, 0, 1e5)
    for s in range(300):
        tr = forced_track(b, (1000.0, 5000.0), 0.0, np.random.default_rng(s), length=36_000.0)
        counts.append(len(tr))
        gaps.append(np.diff(np.sort(tr.x)))
    # the first point is placed at the start; the rest are Poisson(100)
    assert abs(np.mean(counts) - 101) < 3 * math.sqrt(100 / 300)
    g = np.concatenate(gaps)
    assert abs(g.mean() - 360) < 3 * 360 / math.sqrt(len(g)) + 1.0  # +1: truncation at the far end


def test_forced_track_gaps_are_exponential():
    rng = np.random.default_rng(4)
    tr = forced_track(Bounds(0, 1e6, 0, 1e4), (10.0, 5000.0), 0.0, rng, n_points=2000, width=1e-9)
    gaps = np.diff(np.sort(tr.x))
    assert stats.kstest(gaps, "expon", args=(0, 360.0)).pvalue > 0.01


def test_forced_track_stays_within_half_width():
    rng = np.random.default_rng(5)
    b = Bounds(0, 1e5, 0, 1e5)
    start, angle = (2000.0, 3000.0), 37.0
    tr = forced_track(b, start, angle, rng, n_points=300, width=50.0)
    th = math.radians(angle)
    d = -(tr.x - start[0]) * math.sin(th) + (tr.y - start[1]) * math.cos(th)
    assert np.all(np.abs(d) <= 25.0 + 1e-9)


def test_forced_track_with_count_and_length():
    tr = forced_track(Bounds(0, 1e5, 0, 1e5), (100.0, 100.0), 0.0, np.random.default_rng(0),
                      n_points=15, length=16_000.0)
    assert len(tr) == 15
    assert tr.x.min() == pytest.approx(100.0, abs=25) and tr.x.max() <= 16_100.0 + 25


def test_stop_probability_one_gives_single_point():
    cfg = GeneratorConfig(bounds=SMALL, track_classes=(TrackClass(360.0, 1.0),), n_angles=4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        sink = _TrackSink()
        _walk(0.0, 1e9, 0.0, 0.0, 0.0, cfg, rng, sink)
        assert len(sink.t) == 1


def test_birth_tracks_carry_their_line_angle():
    cfg = GeneratorConfig(bounds=SMALL, background=0.0, birth_mean=2e6, n_angles=20, seed=3,
                          track_classes=QUICK)
    plate = sample_plate(cfg)
    assert np.any(plate.labels > 0)
    # aligned track ellipses point along one of the family's angles
    tr = plate.labels > 0
    on_grid = np.isin(plate.position_angle[tr], np.arange(20) * 9.0)
    assert 0.5 < on_grid.mean() < 1.0


def test_seed_gives_identical_files(tmp_path):
    cfg = GeneratorConfig(bounds=SMALL, background=5e-6, birth_mean=5e6, n_angles=50, seed=11,
                          track_classes=QUICK)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_catalog(sample_plate(cfg), a)
    write_catalog(sample_plate(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_two_classes_both_appear_and_labels_partition():
    seen = set()
    for seed in range(5):
        cfg = GeneratorConfig(bounds=SMALL, background=1e-6, birth_mean=5e6, n_angles=30, seed=seed,
                              track_classes=QUICK, class_transition=[[0.9, 0.1], [0.1, 0.9]])
        plate = sample_plate(cfg)
        labels, counts = np.unique(plate.labels, return_counts=True)
        assert counts.sum() == len(plate)
        seen |= set(labels.tolist())
    assert {1, 2} <= seen


def test_never_stopping_tracks_need_bounded_lead_in():
    with pytest.raises(ConfigError):
        GeneratorConfig(track_classes=(TrackClass(360.0, 0.0),), birth_mean=1e12).lead_in()
    # infinite birth mean skips track generation entirely
    cfg = GeneratorConfig(bounds=SMALL, track_classes=(TrackClass(360.0, 0.0),), birth_mean=math.inf,
                          n_angles=4)
    assert len(sample_tracks(cfg, np.random.default_rng(0))) == 0


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        GeneratorConfig(class_prior=[0.2, 0.2])
    with pytest.raises(ConfigError):
        TrackClass(-1.0, 0.1)
