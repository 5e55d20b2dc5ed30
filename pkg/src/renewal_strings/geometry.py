"""Candidate line families and point-to-line binning.

At each angle the plate is covered by strips of width ``w`` whose offsets
step by ``w/2``, so every point falls in exactly two strips. Strip ``j``
covers the half-open perpendicular interval
``[origin + j*w/2, origin + j*w/2 + w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numba
import numpy as np

from .catalog import Bounds, Catalog
from .errors import GeometryError


def make_angle_set(n_angles: int) -> np.ndarray:
    """Angles ``k * 180 / n_angles`` degrees for ``k = 0 .. n_angles - 1``."""
    if n_angles < 1:
        raise GeometryError("n_angles must be at least 1")
    return np.arange(n_angles) * (180.0 / n_angles)


def project(x, y, angle: float):
    """Rotate plate coordinates by ``-angle``: returns (along-line t, perpendicular d)."""
    th = math.radians(angle)
    c, s = math.cos(th), math.sin(th)
    return x * c + y * s, -x * s + y * c


@dataclass(frozen=True)
class LineFamily:
    angle: float
    width: float
    origin_offset: float
    line_count: int
    first_index: int = 0

    def __post_init__(self):
        if not self.width > 0:
            raise GeometryError("line width must be positive")
        if self.line_count < 2:
            raise GeometryError("a line family needs at least two lines")

    @property
    def last_index(self) -> int:
        return self.first_index + self.line_count - 1

    @property
    def covered_band(self) -> tuple[float, float]:
        """Half-open interval of offsets that lie in two lines of this family."""
        half = 0.5 * self.width
        return (self.origin_offset + (self.first_index + 1) * half,
                self.origin_offset + (self.last_index + 1) * half)

    def strip(self, j: int) -> tuple[float, float]:
        # both edges on the grid o + k*w/2 so neighbouring strips share edges exactly
        half = 0.5 * self.width
        return self.origin_offset + j * half, self.origin_offset + (j + 2) * half


def auto_line_count(bounds: Bounds, width: float) -> int:
    """Smallest line count whose covered band spans the plate diagonal."""
    return int(math.ceil(bounds.diagonal / (0.5 * width))) + 2


def make_family(bounds: Bounds, angle: float, width: float,
                line_count: Union[int, str] = "auto") -> LineFamily:
    """Family at ``angle`` whose covered band is centred on the plate centre."""
    if not width > 0:
        raise GeometryError("line width must be positive")
    n = auto_line_count(bounds, width) if line_count == "auto" else int(line_count)
    cx, cy = bounds.center
    _, dc = project(cx, cy, angle)
    # covered band is [o + w/2, o + n*w/2); centre it on dc
    origin = dc - 0.25 * (n + 1) * width
    return LineFamily(angle=angle, width=width, origin_offset=origin, line_count=n)


def family_covers(family: LineFamily, bounds: Bounds) -> bool:
    xs = np.array([bounds.x_min, bounds.x_max, bounds.x_min, bounds.x_max])
    ys = np.array([bounds.y_min, bounds.y_min, bounds.y_max, bounds.y_max])
    _, d = project(xs, ys, family.angle)
    lo, hi = family.covered_band
    return bool(d.min() >= lo and d.max() < hi)


def bin_point(d: float, family: LineFamily) -> tuple[int, int]:
    """Indices of the two lines whose strips contain perpendicular offset ``d``."""
    lo, hi = family.covered_band
    if not (lo <= d < hi):
        raise GeometryError(f"offset {d} outside covered band [{lo}, {hi})")
    half = 0.5 * family.width
    j = math.floor((d - family.origin_offset) / half)
    # the division can round across a strip edge; settle on the edge formula
    if d < family.origin_offset + j * half:
        j -= 1
    elif d >= family.origin_offset + (j + 1) * half:
        j += 1
    return j - 1, j


class LinePoint(NamedTuple):
    record_id: int
    t: float
    d: float
    index: int  # row in the catalog


def build_line_bins(catalog: Catalog, angle: float, family: LineFamily) -> dict[int, list[LinePoint]]:
    """Map line index to its points sorted by ``t`` (ties by record id)."""
    bins: dict[int, list[LinePoint]] = {}
    t, d = project(catalog.x, catalog.y, angle)
    for i in range(len(catalog)):
        p = LinePoint(int(catalog.ids[i]), float(t[i]), float(d[i]), i)
        for j in bin_point(p.d, family):
            bins.setdefault(j, []).append(p)
    for pts in bins.values():
        pts.sort(key=lambda p: (p.t, p.record_id))
    return dict(sorted(bins.items()))


@numba.njit(cache=True, nogil=True)
def _line_t_range(c, s, offset, x0, x1, y0, y1):
    """Parameter interval where the line ``t*u + offset*n`` lies in the box.

    ``u = (c, s)`` and ``n = (-s, c)``. Returns (nan, nan) if it misses.
    """
    lo = -np.inf
    hi = np.inf
    # x(t) = t*c - offset*s
    px = -offset * s
    if abs(c) > 1e-15:
        a = (x0 - px) / c
        b = (x1 - px) / c
        lo = max(lo, min(a, b))
        hi = min(hi, max(a, b))
    elif px < x0 or px > x1:
        return np.nan, np.nan
    py = offset * c
    if abs(s) > 1e-15:
        a = (y0 - py) / s
        b = (y1 - py) / s
        lo = max(lo, min(a, b))
        hi = min(hi, max(a, b))
    elif py < y0 or py > y1:
        return np.nan, np.nan
    if lo > hi:
        return np.nan, np.nan
    return lo, hi


@numba.njit(cache=True, nogil=True)
def _strip_entry(c, s, d_lo, d_hi, x0, x1, y0, y1):
    """Smallest ``t`` over the intersection of a strip with the box."""
    best = np.inf
    for k in range(4):
        x = x0 if (k & 1) == 0 else x1
        y = y0 if (k & 2) == 0 else y1
        d = -x * s + y * c
        if d_lo <= d <= d_hi:
            t = x * c + y * s
            if t < best:
                best = t
    for edge in (d_lo, d_hi):
        a, b = _line_t_range(c, s, edge, x0, x1, y0, y1)
        if not np.isnan(a) and a < best:
            best = a
    return best


def strip_entry_t(bounds: Bounds, family: LineFamily, j: int) -> float:
    """Along-line coordinate where strip ``j`` enters the plate bounds."""
    th = math.radians(family.angle)
    lo, hi = family.strip(j)
    return float(_strip_entry(math.cos(th), math.sin(th), lo, hi, *bounds.as_tuple()))
