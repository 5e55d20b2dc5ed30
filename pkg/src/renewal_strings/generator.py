"""Synthetic plates drawn from the renewal-string generative model.

Background records come from a Poisson process that is homogeneous inside
each box of a rate grid. Tracks are born along every line of the candidate
family by a sparse Poisson birth process; a born track walks forward with
exponential gaps whose mean depends on its hidden class, switching class or
stopping after each point, and ends at the plate edge. Each track point is
displaced perpendicular to its line by ``Uniform(-w/2, w/2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .catalog import BACKGROUND, Bounds, Catalog, concat
from .density import DensityGrid, constant_grid
from .errors import ConfigError
from .geometry import make_angle_set, make_family

logger = logging.getLogger(__name__)

TRACK_SEMI_MAJOR = 300.0
TRACK_SEMI_MINOR = 60.0

#: Upper bound on the expected number of steps a lead-in track may take.
_MAX_LEAD_IN_STEPS = 1e7


@dataclass(frozen=True)
class TrackClass:
    mean_gap: float
    stop_probability: float
    alignment_prob: float = 0.8

    def __post_init__(self):
        if not self.mean_gap > 0:
            raise ConfigError("track mean_gap must be positive")
        for name in ("stop_probability", "alignment_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")


def _default_classes() -> tuple[TrackClass, ...]:
    # a dense, short-lived class and a sparser, longer one
    return (TrackClass(360.0, 0.02, 0.8), TrackClass(1500.0, 0.005, 0.5))


@dataclass(frozen=True, eq=False)
class GeneratorConfig:
    bounds: Bounds = Bounds(0.0, 320_000.0, 0.0, 320_000.0)
    background: Union[float, DensityGrid] = 1e-6
    birth_mean: float = 1e12
    track_classes: Sequence[TrackClass] = field(default_factory=_default_classes)
    class_prior: Optional[Sequence[float]] = None
    class_transition: Optional[np.ndarray] = None
    width: float = 50.0
    n_angles: int = 1000
    lines_per_angle: Union[int, str] = "auto"
    seed: int = 0
    background_semi_major: tuple[float, float] = (20.0, 80.0)

    def __post_init__(self):
        k = len(self.track_classes)
        if k < 1:
            raise ConfigError("need at least one track class")
        prior = np.full(k, 1.0 / k) if self.class_prior is None else np.array(self.class_prior, float)
        if prior.shape != (k,) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
            raise ConfigError("class_prior must be a probability vector over the track classes")
        C = np.eye(k) if self.class_transition is None else np.array(self.class_transition, float)
        if C.shape != (k, k) or np.any(C < 0) or np.any(np.abs(C.sum(axis=0) - 1) > 1e-9):
            raise ConfigError("class_transition must be a column-stochastic k x k matrix")
        if not self.birth_mean > 0:
            raise ConfigError("birth_mean must be positive")
        if not self.width > 0:
            raise ConfigError("width must be positive")
        object.__setattr__(self, "class_prior", prior)
        object.__setattr__(self, "class_transition", C)

    @property
    def background_grid(self) -> DensityGrid:
        if isinstance(self.background, DensityGrid):
            return self.background
        return constant_grid(self.bounds, float(self.background))

    def lead_in(self) -> float:
        """How far before the plate edge births are simulated.

        Three birth means, shortened to ten expected track lengths when
        tracks can stop.
        """
        ext = 3.0 * self.birth_mean
        stop = min(c.stop_probability for c in self.track_classes)
        longest = max(c.mean_gap for c in self.track_classes)
        if stop > 0:
            ext = min(ext, 10.0 * longest / stop)
        if math.isfinite(self.birth_mean) and ext / min(c.mean_gap for c in self.track_classes) > _MAX_LEAD_IN_STEPS:
            raise ConfigError("tracks that never stop need a much smaller birth_mean lead-in; "
                              "give every class a positive stop_probability")
        return ext


def gradient_grid(bounds: Bounds, total: float, ratio: float = 2.0, nx: int = 200, ny: int = 200) -> DensityGrid:
    """Rate grid rising linearly in x from ``r`` to ``ratio * r``, ``total`` points expected."""
    w = np.linspace(1.0, ratio, nx)[:, None] * np.ones((1, ny))
    box_area = bounds.area / (nx * ny)
    rates = w * total / (w.sum() * box_area)
    return DensityGrid(nx, ny, bounds, rates)


def _background_shapes(n: int, config: GeneratorConfig, rng: np.random.Generator):
    lo, hi = config.background_semi_major
    a = rng.uniform(lo, hi, n)
    b = a * rng.uniform(0.5, 1.0, n)
    pa = rng.uniform(0.0, 180.0, n)
    return a, b, pa


def sample_background(config: GeneratorConfig, rng: np.random.Generator) -> Catalog:
    """Poisson counts per box, positions uniform within each box."""
    grid = config.background_grid
    b = grid.bounds
    counts = rng.poisson(grid.rates * grid.box_area)
    ix, iy = np.nonzero(counts)
    reps = counts[ix, iy]
    ix = np.repeat(ix, reps)
    iy = np.repeat(iy, reps)
    n = len(ix)
    dx, dy = b.width / grid.nx, b.height / grid.ny
    x = b.x_min + (ix + rng.random(n)) * dx
    y = b.y_min + (iy + rng.random(n)) * dy
    # keep the closed plate edge: random() < 1 but rounding can touch it
    x = np.minimum(x, b.x_max)
    y = np.minimum(y, b.y_max)
    a, bb, pa = _background_shapes(n, config, rng)
    return Catalog(ids=np.arange(n), x=x, y=y, bounds=config.bounds, semi_major=a, semi_minor=bb,
                   position_angle=pa, labels=np.full(n, BACKGROUND))


class _TrackSink:
    def __init__(self):
        self.t, self.d, self.angle, self.cls = [], [], [], []

    def add(self, t, d, angle, cls):
        self.t.append(t)
        self.d.append(d)
        self.angle.append(angle)
        self.cls.append(cls)


def _walk(t0, end, start_visible, d_line, angle, config, rng, sink):
    """Generate one track from birth position ``t0``; returns where it ended."""
    classes = config.track_classes
    k = int(rng.choice(len(classes), p=config.class_prior))
    t = t0
    while True:
        if t >= start_visible:
            sink.add(t, d_line + rng.uniform(-0.5, 0.5) * config.width, angle, k)
        if rng.random() < classes[k].stop_probability:
            return t
        k = int(rng.choice(len(classes), p=config.class_transition[:, k]))
        t += rng.exponential(classes[k].mean_gap)
        if t > end:
            return t


def sample_tracks(config: GeneratorConfig, rng: np.random.Generator) -> Catalog:
    """Birth-process tracks over every (angle, line) of the family."""
    bounds = config.bounds
    ext = config.lead_in() if math.isfinite(config.birth_mean) else 0.0
    sink = _TrackSink()
    for angle in make_angle_set(config.n_angles):
        fam = make_family(bounds, float(angle), config.width, config.lines_per_angle)
        th = math.radians(angle)
        c, s = math.cos(th), math.sin(th)
        centers = fam.origin_offset + (np.arange(fam.line_count) + 1) * 0.5 * config.width
        lo, hi = _center_ranges(centers, c, s, bounds)
        ok = np.isfinite(lo)
        if not ok.any() or not math.isfinite(config.birth_mean):
            continue
        lengths = np.where(ok, hi - lo + ext, 0.0)
        births = rng.poisson(lengths / config.birth_mean)
        for j in np.nonzero(births)[0]:
            pos = np.sort(lo[j] - ext + rng.random(births[j]) * lengths[j])
            busy_until = -np.inf
            for t0 in pos:
                if t0 <= busy_until:
                    continue
                busy_until = _walk(t0, hi[j], lo[j], centers[j], float(angle), config, rng, sink)
    if not sink.t:
        return _empty(bounds)
    t = np.array(sink.t)
    d = np.array(sink.d)
    ang = np.array(sink.angle)
    cls = np.array(sink.cls)
    x, y = _unproject(t, d, ang)
    inside = bounds.contains(x, y)
    x, y, ang, cls = x[inside], y[inside], ang[inside], cls[inside]
    align_p = np.array([c.alignment_prob for c in config.track_classes])[cls]
    return _track_catalog(x, y, ang, cls + 1, align_p, bounds, rng)


def _empty(bounds: Bounds) -> Catalog:
    return Catalog(ids=np.empty(0), x=np.empty(0), y=np.empty(0), bounds=bounds)


def _unproject(t, d, angle_deg):
    th = np.radians(angle_deg)
    c, s = np.cos(th), np.sin(th)
    return t * c - d * s, t * s + d * c


def _center_ranges(offsets, c, s, b: Bounds):
    """Vectorised parameter interval of lines ``t*u + offset*n`` inside the box."""
    lo = np.full(offsets.shape, -np.inf)
    hi = np.full(offsets.shape, np.inf)
    for comp, base, vmin, vmax in ((c, -offsets * s, b.x_min, b.x_max), (s, offsets * c, b.y_min, b.y_max)):
        if abs(comp) > 1e-15:
            t1 = (vmin - base) / comp
            t2 = (vmax - base) / comp
            lo = np.maximum(lo, np.minimum(t1, t2))
            hi = np.minimum(hi, np.maximum(t1, t2))
        else:
            miss = (base < vmin) | (base > vmax)
            lo[miss] = np.nan
    bad = ~(lo <= hi)
    lo[bad] = np.nan
    hi[bad] = np.nan
    return lo, hi


def _track_catalog(x, y, line_angle, labels, align_p, bounds, rng) -> Catalog:
    n = len(x)
    aligned = rng.random(n) < align_p
    pa = np.where(aligned, np.mod(line_angle, 180.0), rng.uniform(0.0, 180.0, n))
    return Catalog(ids=np.arange(n), x=x, y=y, bounds=bounds,
                   semi_major=np.full(n, TRACK_SEMI_MAJOR), semi_minor=np.full(n, TRACK_SEMI_MINOR),
                   position_angle=pa, labels=labels)


def forced_track(bounds: Bounds, start: tuple[float, float], angle: float, rng: np.random.Generator,
                 mean_gap: float = 360.0, n_points: Optional[int] = None, length: Optional[float] = None,
                 width: float = 50.0, alignment_prob: float = 0.8, label: int = 1) -> Catalog:
    """A single track with no stop: ``n_points`` points, or as many as fit in ``length``.

    The first point sits at ``start``; later points follow exponential gaps
    along ``angle``. Given both ``n_points`` and ``length``, the remaining
    points are uniform on ``(0, length]``, which is the same renewal process
    conditioned on its count. Points leaving the bounds are dropped.
    """
    if n_points is None and length is None:
        raise ConfigError("give n_points, length, or both")
    if n_points is not None and n_points < 1:
        raise ConfigError("n_points must be at least 1")
    if n_points is not None and length is not None:
        t = np.concatenate(([0.0], np.sort(rng.uniform(0.0, length, n_points - 1))))
    elif n_points is not None:
        t = np.concatenate(([0.0], np.cumsum(rng.exponential(mean_gap, n_points - 1))))
    else:
        ts = [0.0]
        while True:
            nxt = ts[-1] + rng.exponential(mean_gap)
            if nxt > length:
                break
            ts.append(nxt)
        t = np.array(ts)
    d = rng.uniform(-0.5, 0.5, len(t)) * width
    th = math.radians(angle)
    x = start[0] + t * math.cos(th) - d * math.sin(th)
    y = start[1] + t * math.sin(th) + d * math.cos(th)
    keep = bounds.contains(x, y)
    n = int(keep.sum())
    return _track_catalog(x[keep], y[keep], np.full(n, angle), np.full(n, label),
                          np.full(n, alignment_prob), bounds, rng)


def sample_plate(config: GeneratorConfig) -> Catalog:
    """Background plus birth-process tracks, ids assigned in that order."""
    rng = np.random.default_rng(config.seed)
    bg = sample_background(config, rng)
    tracks = sample_tracks(config, rng)
    logger.info("generated %d background and %d track records", len(bg), len(tracks))
    return concat([bg, tracks], config.bounds)
