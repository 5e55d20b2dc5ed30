"""Sweep the candidate line family and score every record.

For each angle every record is binned into its two strips, each strip is
sorted along the line, and the renewal HMM is smoothed over the gaps. A
record's track probability is the largest track posterior it receives over
all of its ``2 * n_angles`` strip memberships.

The reported angle comes from the membership in which the record sits in the
longest stretch of above-threshold points, then the smallest background
posterior, then the smaller angle and line index. The plain posterior argmax
is a poor angle estimate: along a slightly rotated strip the projected gaps
of a track shrink by ``cos(delta)``, which raises mid-fragment posteriors a
little above those at the true angle. Both reductions are total orders, so
the result does not depend on the order in which angles are processed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numba
import numpy as np

from .catalog import Catalog
from .density import DensityGrid, estimate_grid
from .errors import ConfigError, GeometryError
from .geometry import (
    LineFamily,
    LinePoint,
    _strip_entry,
    bin_point,
    family_covers,
    make_angle_set,
    make_family,
    strip_entry_t,
)
from .hmm import (
    ALIGN_UNKNOWN,
    RenewalHmmModel,
    _log_emissions_into,
    _smooth_into,
    default_model,
    log_emissions,
    smooth,
)

logger = logging.getLogger(__name__)

#: Half-width in degrees of the cone inside which an ellipse counts as aligned.
DEFAULT_ALIGNMENT_TOLERANCE = 9.0

#: Angles handed to one kernel call.
_CHUNK = 16


@dataclass(frozen=True)
class DetectorConfig:
    n_angles: int = 1000
    width: float = 50.0
    lines_per_angle: Union[int, str] = "auto"
    flag_threshold: float = 0.5
    min_points_per_line: int = 2
    model: RenewalHmmModel = field(default_factory=default_model)
    grid_nx: int = 200
    grid_ny: int = 200
    alignment_tolerance: float = DEFAULT_ALIGNMENT_TOLERANCE

    def __post_init__(self):
        if not 0 < self.flag_threshold < 1:
            raise ConfigError("flag_threshold must lie in (0, 1)")
        if not self.width > 0:
            raise ConfigError("width must be positive")
        if self.n_angles < 1:
            raise ConfigError("n_angles must be at least 1")
        if self.min_points_per_line < 1:
            raise ConfigError("min_points_per_line must be at least 1")
        if self.lines_per_angle != "auto" and int(self.lines_per_angle) < 2:
            raise ConfigError("lines_per_angle must be 'auto' or >= 2")
        if not 0 <= self.alignment_tolerance <= 90:
            raise ConfigError("alignment_tolerance must lie in [0, 90] degrees")


@dataclass(frozen=True, eq=False)
class DetectionResult:
    p_track: np.ndarray
    detect_angle: np.ndarray  # NaN where no HMM ever ran over the record
    detect_line: np.ndarray  # -1 where no HMM ever ran over the record
    flag: np.ndarray
    threshold: float
    max_norm_error: float = 0.0

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flag))


def flag(result: DetectionResult, threshold: float) -> DetectionResult:
    """Recompute flags as ``p_track > threshold``; probabilities are untouched."""
    if not 0 < threshold < 1:
        raise ConfigError("threshold must lie in (0, 1)")
    return replace(result, flag=result.p_track > threshold, threshold=threshold)


def alignment_codes(position_angle: np.ndarray, angle: float, tolerance: float) -> np.ndarray:
    """1 if the ellipse is within ``tolerance`` degrees of the line, 0 if not, -1 if unknown."""
    diff = np.abs(position_angle - angle) % 180.0
    diff = np.minimum(diff, 180.0 - diff)
    codes = (diff <= tolerance).astype(np.int8)
    codes[np.isnan(position_angle)] = ALIGN_UNKNOWN
    return codes


def detect_line(points: Sequence[LinePoint], catalog: Catalog, family: LineFamily,
                model: RenewalHmmModel, grid: DensityGrid, min_points: int = 2,
                alignment_tolerance: Optional[float] = DEFAULT_ALIGNMENT_TOLERANCE,
                line_index: Optional[int] = None) -> np.ndarray:
    """Track posterior for each point of one strip (points sorted by ``t``).

    The first gap runs from the strip's entry into the plate bounds. Lines
    with fewer than ``min_points`` points are left as pure background.
    """
    n = len(points)
    if n == 0:
        return np.empty(0)
    if n < min_points:
        return np.zeros(n)
    if line_index is None:
        line_index = _line_of(points, family)
    idx = np.array([p.index for p in points])
    t = np.array([p.t for p in points])
    entry = strip_entry_t(catalog.bounds, family, line_index)
    delta = np.diff(t, prepend=entry)
    delta[0] = max(delta[0], 0.0)
    bg = grid.linear_rate(catalog.x[idx], catalog.y[idx], family.width)
    aligned = None
    if model.alignment_prob is not None and alignment_tolerance is not None:
        aligned = alignment_codes(catalog.position_angle[idx], family.angle, alignment_tolerance)
    post = smooth(log_emissions(delta, np.atleast_1d(bg), aligned, model), model.transition, model.initial)
    return post[:, 1:].sum(axis=1)


def _line_of(points: Sequence[LinePoint], family: LineFamily) -> int:
    # the strip shared by every point's pair of lines
    common = None
    for p in points:
        pair = set(bin_point(p.d, family))
        common = pair if common is None else common & pair
    if not common or len(common) != 1:
        raise GeometryError("points do not share a single strip; pass line_index")
    return common.pop()


@numba.njit(cache=True, nogil=True)
def _better(run, bg, a, l, brun, bbg, ba, bl):
    if run != brun:
        return run > brun
    if bg != bbg:
        return bg < bbg
    if ba < 0 or a < ba:
        return True
    return a == ba and l < bl


@numba.njit(cache=True, nogil=True)
def _sweep_chunk(angle_ids, angles, origins, x, y, by_id, rate_lin, pa, use_align, align_tol,
                 width, line_count, min_points, threshold, x0, x1, y0, y1,
                 T, init, extra_rate, log_a, log_na,
                 best_p, attr_run, attr_bg, attr_a, attr_l):
    n = x.shape[0]
    k = T.shape[0]
    half = 0.5 * width
    t = np.empty(n)
    jj = np.empty(n, dtype=np.int64)
    counts = np.zeros(line_count + 1, dtype=np.int64)
    starts = np.zeros(line_count + 1, dtype=np.int64)
    fill = np.zeros(line_count + 1, dtype=np.int64)
    bucket = np.empty(2 * n, dtype=np.int64)
    delta = np.empty(n)
    bgr = np.empty(n)
    ptrack = np.empty(n)
    runs = np.empty(n, dtype=np.int64)
    aligned = np.empty(n, dtype=np.int8)
    log_e = np.empty((n, k))
    post = np.empty((n, k))
    alpha = np.empty((n, k))
    beta = np.empty((n, k))
    scale = np.empty(n)
    norm_err = 0.0
    for q in range(angle_ids.shape[0]):
        a = angle_ids[q]
        theta = angles[a]
        th = math.radians(theta)
        c = math.cos(th)
        s = math.sin(th)
        origin = origins[a]
        for i in range(n):
            t[i] = x[i] * c + y[i] * s
            d = -x[i] * s + y[i] * c
            j = int(math.floor((d - origin) / half))
            if d < origin + j * half:
                j -= 1
            elif d >= origin + (j + 1) * half:
                j += 1
            if j < 1 or j > line_count - 1:
                raise ValueError("point outside the covered band of the line family")
            jj[i] = j
        order = by_id[np.argsort(t[by_id], kind="mergesort")]
        counts[:] = 0
        for i in range(n):
            counts[jj[i] - 1] += 1
            counts[jj[i]] += 1
        acc = 0
        for L in range(line_count):
            starts[L] = acc
            fill[L] = acc
            acc += counts[L]
        for r in range(n):
            i = order[r]
            for L in (jj[i] - 1, jj[i]):
                bucket[fill[L]] = i
                fill[L] += 1
        for L in range(line_count):
            m = counts[L]
            if m == 0 or m < min_points:
                continue
            b0 = starts[L]
            lo = origin + L * half
            entry = _strip_entry(c, s, lo, origin + (L + 2) * half, x0, x1, y0, y1)
            prev = entry
            for r in range(m):
                i = bucket[b0 + r]
                dt = t[i] - prev
                delta[r] = dt if dt > 0.0 else 0.0
                prev = t[i]
                bgr[r] = rate_lin[i]
                code = -1
                if use_align and not math.isnan(pa[i]):
                    diff = abs(pa[i] - theta) % 180.0
                    if 180.0 - diff < diff:
                        diff = 180.0 - diff
                    code = 1 if diff <= align_tol else 0
                aligned[r] = code
            _log_emissions_into(delta[:m], bgr[:m], aligned[:m], extra_rate, log_a, log_na, log_e[:m])
            _smooth_into(log_e[:m], T, init, post[:m], alpha[:m], beta[:m], scale[:m])
            for r in range(m):
                tot = 0.0
                acc_p = 0.0
                for st in range(k):
                    tot += post[r, st]
                    if st > 0:
                        acc_p += post[r, st]
                ptrack[r] = acc_p
                e = abs(tot - 1.0)
                if e > norm_err:
                    norm_err = e
            _run_lengths(ptrack[:m], threshold, runs[:m])
            for r in range(m):
                i = bucket[b0 + r]
                if ptrack[r] > best_p[i]:
                    best_p[i] = ptrack[r]
                if _better(runs[r], post[r, 0], a, L, attr_run[i], attr_bg[i], attr_a[i], attr_l[i]):
                    attr_run[i] = runs[r]
                    attr_bg[i] = post[r, 0]
                    attr_a[i] = a
                    attr_l[i] = L
    return norm_err


@numba.njit(cache=True, nogil=True)
def _run_lengths(p, threshold, out):
    """Length of the above-threshold stretch each point sits in (0 if below)."""
    m = p.shape[0]
    r = 0
    while r < m:
        if p[r] > threshold:
            e = r
            while e < m and p[e] > threshold:
                e += 1
            for u in range(r, e):
                out[u] = e - r
            r = e
        else:
            out[r] = 0
            r += 1


def run_lengths(p: np.ndarray, threshold: float) -> np.ndarray:
    out = np.empty(len(p), dtype=np.int64)
    _run_lengths(np.ascontiguousarray(p, dtype=np.float64), float(threshold), out)
    return out


def _merge(into, other):
    """Fold one chunk's reductions into the running ones (order independent)."""
    p, run, bg, a, l = into
    q, run2, bg2, b, m = other
    np.maximum(p, q, out=p)
    later = (b >= 0) & ((a < 0) | (b < a) | ((b == a) & (m < l)))
    better = (run2 > run) | ((run2 == run) & ((bg2 < bg) | ((bg2 == bg) & later)))
    for dst, src in zip(into[1:], other[1:]):
        dst[better] = src[better]


def _families(catalog: Catalog, config: DetectorConfig, angles: np.ndarray) -> list[LineFamily]:
    fams = [make_family(catalog.bounds, float(th), config.width, config.lines_per_angle) for th in angles]
    if config.lines_per_angle != "auto":
        for fam in fams:
            if not family_covers(fam, catalog.bounds):
                raise ConfigError(f"{fam.line_count} lines of width {config.width} do not cover "
                                  f"the plate at angle {fam.angle}")
    return fams


def _fresh(n):
    return (np.zeros(n), np.zeros(n, dtype=np.int64), np.full(n, np.inf),
            np.full(n, -1, dtype=np.int64), np.full(n, -1, dtype=np.int64))


def sweep(catalog: Catalog, config: DetectorConfig = DetectorConfig(), threads: int = 1,
          grid: Optional[DensityGrid] = None) -> DetectionResult:
    """Score every record of ``catalog`` over all angles and lines."""
    n = len(catalog)
    angles = make_angle_set(config.n_angles)
    merged = _fresh(n)
    if n == 0:
        return _result(merged, angles, config.flag_threshold, 0.0)
    if grid is None:
        grid = estimate_grid(catalog, config.grid_nx, config.grid_ny)
    fams = _families(catalog, config, angles)
    origins = np.array([f.origin_offset for f in fams])
    line_count = fams[0].line_count
    model = config.model
    rate_lin = np.ascontiguousarray(grid.lookup(catalog.x, catalog.y) * config.width, dtype=np.float64)
    log_a, log_na = model.alignment_logs()
    by_id = np.argsort(catalog.ids, kind="stable")
    b = catalog.bounds
    statics = (angles, origins, np.ascontiguousarray(catalog.x), np.ascontiguousarray(catalog.y),
               by_id, rate_lin, np.ascontiguousarray(catalog.position_angle),
               model.alignment_prob is not None, float(config.alignment_tolerance),
               float(config.width), int(line_count), int(config.min_points_per_line),
               float(config.flag_threshold), b.x_min, b.x_max, b.y_min, b.y_max,
               np.ascontiguousarray(model.transition), np.ascontiguousarray(model.initial),
               model.extra_rate, log_a, log_na)

    def run(chunk):
        out = _fresh(n)
        err = _sweep_chunk(chunk, *statics, *out)
        return out, err

    chunks = [np.arange(i, min(i + _CHUNK, len(angles))) for i in range(0, len(angles), _CHUNK)]
    logger.info("sweeping %d records over %d angles x %d lines with %d thread(s)",
                n, len(angles), line_count, threads)
    norm_err = 0.0
    if threads <= 1:
        for out, err in map(run, chunks):
            _merge(merged, out)
            norm_err = max(norm_err, err)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for out, err in pool.map(run, chunks):
                _merge(merged, out)
                norm_err = max(norm_err, err)
    return _result(merged, angles, config.flag_threshold, norm_err)


def _result(merged, angles, threshold, norm_err) -> DetectionResult:
    p, _, _, a, l = merged
    angle = np.where(a >= 0, angles[np.maximum(a, 0)], np.nan)
    return DetectionResult(p_track=p, detect_angle=angle, detect_line=l, flag=p > threshold,
                           threshold=threshold, max_norm_error=float(norm_err))
