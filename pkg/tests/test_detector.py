import numpy as np
import pytest

from renewal_strings.catalog import Bounds, Catalog, concat
from renewal_strings.density import constant_grid, estimate_grid
from renewal_strings.detector import (
    DetectionResult, DetectorConfig, alignment_codes, detect_line, flag, run_lengths, sweep,
)
from renewal_strings.errors import ConfigError
from renewal_strings.generator import forced_track
from renewal_strings.geometry import build_line_bins, make_angle_set, make_family
from renewal_strings.hmm import default_model, log_emissions

from conftest import uniform_catalog
from oracles import enumerate_posteriors

SIDE = 3.2e5


def _line_catalog(xs, y=500.0, pa=None):
    n = len(xs)
    kw = {}
    if pa is not None:
        kw = dict(semi_major=np.full(n, 300.0), semi_minor=np.full(n, 60.0), position_angle=np.full(n, pa))
    return Catalog(ids=np.arange(n), x=np.asarray(xs, float), y=np.full(n, y),
                   bounds=Bounds(0, 3e5, 0, 1000), **kw)


def _points_on_line(cat, family):
    bins = build_line_bins(cat, family.angle, family)
    j = max(bins, key=lambda k: len(bins[k]))
    return bins[j], j


def test_empty_and_single_point_lines():
    model = default_model()
    cat = _line_catalog([1000.0])
    fam = make_family(cat.bounds, 0.0, 50.0)
    grid = constant_grid(cat.bounds, 2e-6)
    assert detect_line([], cat, fam, model, grid).shape == (0,)
    pts, j = _points_on_line(cat, fam)
    np.testing.assert_array_equal(detect_line(pts, cat, fam, model, grid, line_index=j), [0.0])


def test_dense_run_on_sparse_line_matches_enumeration():
    # 20 points 100 microns apart, background 1e-4 per micron along the strip
    xs = 150_000.0 + 100.0 * np.arange(20)
    cat = _line_catalog(xs)
    fam = make_family(cat.bounds, 0.0, 50.0)
    grid = constant_grid(cat.bounds, 1e-4 / 50.0)
    model = default_model()
    pts, j = _points_on_line(cat, fam)
    p = detect_line(pts, cat, fam, model, grid, line_index=j)
    assert np.all(p[1:-1] > 0.5)
    # oracle: all 2^20 hidden paths of the same observation sequence
    delta = np.diff([q.t for q in pts], prepend=0.0)
    le = log_emissions(delta, np.full(20, 1e-4), None, model)
    want = enumerate_posteriors(le, model.transition, model.initial)[:, 1]
    np.testing.assert_allclose(p, want, rtol=1e-10)


def test_alignment_codes():
    codes = alignment_codes(np.array([30.0, 40.0, 25.0, np.nan]), 30.5, 9.0)
    np.testing.assert_array_equal(codes, [1, 0, 1, -1])
    np.testing.assert_array_equal(alignment_codes(np.array([1.0]), 179.0, 9.0), [1])


def test_run_lengths():
    np.testing.assert_array_equal(run_lengths(np.array([0.9, 0.8, 0.1, 0.7, 0.5, 0.6]), 0.5),
                                  [2, 2, 0, 1, 0, 1])


def test_flag_is_strict_and_monotone():
    r = DetectionResult(p_track=np.array([0.5, 0.51, 0.99, 0.995, 0.0]), detect_angle=np.zeros(5),
                        detect_line=np.zeros(5, int), flag=np.zeros(5, bool), threshold=0.5)
    f5 = flag(r, 0.5).flag
    np.testing.assert_array_equal(f5, [False, True, True, True, False])
    f99 = flag(r, 0.99).flag
    assert np.all(f5[f99])
    zero = DetectionResult(np.zeros(3), np.zeros(3), np.zeros(3, int), np.zeros(3, bool), 0.5)
    for th in (0.01, 0.5, 0.99):
        assert not flag(zero, th).flag.any()
    with pytest.raises(ConfigError):
        flag(r, 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        DetectorConfig(width=0)
    with pytest.raises(ConfigError):
        DetectorConfig(flag_threshold=1.5)


def test_one_record_catalog():
    cat = Catalog(ids=[0], x=[10.0], y=[10.0], bounds=Bounds(0, 100, 0, 100))
    r = sweep(cat, DetectorConfig(n_angles=8))
    assert r.p_track[0] == 0.0 and not r.flag[0]
    assert np.isnan(r.detect_angle[0])


@pytest.fixture(scope="module")
def background_1000():
    return uniform_catalog(1000, side=SIDE, seed=1)


@pytest.fixture(scope="module")
def with_track(background_1000):
    rng = np.random.default_rng(2)
    b = background_1000.bounds
    track = forced_track(b, (80_000.0, 90_000.0), 30.0, rng, n_points=50, label=1)
    assert len(track) == 50
    return concat([background_1000, track], b)


def test_pure_background_flags_nothing(background_1000):
    r = sweep(background_1000, DetectorConfig())
    assert r.n_flagged == 0
    assert r.max_norm_error < 1e-12


def test_track_recovered_at_its_angle(with_track):
    r = sweep(with_track, DetectorConfig())
    tr = with_track.labels > 0
    assert r.flag[tr].mean() >= 0.9
    ang = r.detect_angle[tr & r.flag]
    assert np.all(np.abs(ang - 30.0) <= 0.36)
    assert not r.flag[~tr].any()


def test_threads_do_not_change_the_result(with_track):
    cfg = DetectorConfig(n_angles=200)
    a = sweep(with_track, cfg, threads=1)
    b = sweep(with_track, cfg, threads=4)
    for name in ("p_track", "detect_angle", "detect_line", "flag"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_p_track_is_max_over_memberships():
    # naive recomputation with the pure-Python path over every (angle, line)
    rng = np.random.default_rng(9)
    base = uniform_catalog(60, side=5000.0, seed=9)
    track = forced_track(base.bounds, (500.0, 700.0), 40.0, rng, n_points=12, mean_gap=200.0, label=1)
    cat = concat([base, track], base.bounds)
    cfg = DetectorConfig(n_angles=12, width=50.0, grid_nx=10, grid_ny=10)
    got = sweep(cat, cfg)
    grid = estimate_grid(cat, 10, 10)
    best = np.zeros(len(cat))
    for angle in make_angle_set(cfg.n_angles):
        fam = make_family(cat.bounds, float(angle), cfg.width)
        for j, pts in build_line_bins(cat, float(angle), fam).items():
            p = detect_line(pts, cat, fam, cfg.model, grid, line_index=j)
            for q, v in zip(pts, p):
                best[q.index] = max(best[q.index], v)
    np.testing.assert_allclose(got.p_track, best, rtol=1e-12, atol=1e-300)


def test_rotation_by_one_step_flags_the_same_records(with_track):
    cfg = DetectorConfig(n_angles=200)
    r0 = sweep(with_track, cfg)
    step = np.radians(180.0 / cfg.n_angles)
    cx, cy = with_track.bounds.center
    dx, dy = with_track.x - cx, with_track.y - cy
    x = cx + dx * np.cos(step) - dy * np.sin(step)
    y = cy + dx * np.sin(step) + dy * np.cos(step)
    keep = with_track.bounds.contains(x, y)
    rot = Catalog(ids=with_track.ids[keep], x=x[keep], y=y[keep], bounds=with_track.bounds,
                  semi_major=with_track.semi_major[keep], semi_minor=with_track.semi_minor[keep],
                  position_angle=np.mod(with_track.position_angle[keep] + 180.0 / cfg.n_angles, 180.0),
                  labels=with_track.labels[keep])
    r1 = sweep(rot, cfg)
    flagged0 = set(with_track.ids[r0.flag & keep])
    flagged1 = set(rot.ids[r1.flag])
    assert flagged0 == flagged1
