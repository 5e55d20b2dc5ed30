"""Hough-transform baseline with a homogeneous Poisson null.

Each angle cell carries ``lines_per_angle`` non-overlapping strips spanning
the plate diagonal, so every record lands in exactly one strip per angle.
A strip's expected count under the null is the record total times the
fraction of the plate area it covers; its p-value is the Poisson upper tail
``P(N >= count)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .catalog import Bounds, Catalog
from .errors import ConfigError

logger = logging.getLogger(__name__)

#: Significance levels of the published comparison table.
TABLE_LEVELS = (0.5, 0.9, 0.99, 1 - 1e-4, 1 - 1e-6, 1 - 1e-7)


@dataclass(frozen=True)
class HoughConfig:
    n_angles: int = 1000
    lines_per_angle: int = 9000
    exclusion_deg: float = 1.5
    min_expected: float = 12.0
    siglev: float = 1 - 1e-7

    def __post_init__(self):
        if self.n_angles < 1 or self.lines_per_angle < 1:
            raise ConfigError("n_angles and lines_per_angle must be positive")
        if not 0 < self.siglev < 1:
            raise ConfigError("siglev must lie in (0, 1)")
        if self.exclusion_deg < 0:
            raise ConfigError("exclusion_deg must be non-negative")

    @property
    def angles(self) -> np.ndarray:
        """Angle-cell centres in degrees."""
        return (np.arange(self.n_angles) + 0.5) * (180.0 / self.n_angles)

    def considered_angles(self) -> np.ndarray:
        """Mask of angles farther than ``exclusion_deg`` from horizontal and vertical."""
        a = self.angles
        dist = np.minimum.reduce([a, np.abs(a - 90.0), 180.0 - a])
        return dist > self.exclusion_deg

    @property
    def n_considered(self) -> int:
        return int(self.considered_angles().sum()) * self.lines_per_angle


def theoretical_false_positives(config: HoughConfig, siglev: float) -> float:
    """Expected false detections if every considered p-value were uniform."""
    return config.n_considered * (1.0 - siglev)


def poisson_tail(n, mu):
    """``P(N >= n)`` for ``N ~ Poisson(mu)``; vectorised."""
    n = np.asarray(n)
    mu = np.asarray(mu, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        out = np.where(n <= 0, 1.0, special.gammainc(np.maximum(n, 1), mu))
    return float(out) if out.ndim == 0 else out


def _uniform_sum_cdf(s, a, b):
    """CDF at ``s`` of ``U[0, a] + U[0, b]``."""
    a, b = min(a, b), max(a, b)
    s = np.clip(s, 0.0, a + b)
    if a <= 1e-12 * b:
        return s / b
    return np.where(
        s <= a, s * s / (2 * a * b),
        np.where(s <= b, (s - 0.5 * a) / b, 1.0 - (a + b - s) ** 2 / (2 * a * b)),
    )


def strip_area_fraction(bounds: Bounds, angle: float, d_lo, d_hi):
    """Fraction of the plate between perpendicular offsets ``d_lo`` and ``d_hi``."""
    th = math.radians(angle)
    s, c = math.sin(th), math.cos(th)
    # d = -x sin + y cos, a sum of two independent uniforms
    a = bounds.width * abs(s)
    b = bounds.height * abs(c)
    d_min = min(-bounds.x_min * s, -bounds.x_max * s) + min(bounds.y_min * c, bounds.y_max * c)
    return _uniform_sum_cdf(np.asarray(d_hi) - d_min, a, b) - _uniform_sum_cdf(np.asarray(d_lo) - d_min, a, b)


@dataclass(frozen=True, eq=False)
class HoughResult:
    config: HoughConfig
    bounds: Bounds
    counts: np.ndarray  # (n_angles, lines_per_angle)
    mu: np.ndarray
    p_value: np.ndarray
    band_start: np.ndarray  # per-angle offset of strip 0
    strip_width: float

    def flagged(self, siglev: Optional[float] = None) -> np.ndarray:
        """Boolean (n_angles, lines_per_angle) mask of flagged accumulators."""
        cfg = self.config
        s = cfg.siglev if siglev is None else siglev
        return (cfg.considered_angles()[:, None] & (self.mu >= cfg.min_expected)
                & (self.p_value <= 1.0 - s))

    def to_csv(self, path, siglev: Optional[float] = None, only_flagged: bool = True) -> None:
        flags = self.flagged(siglev)
        angles = self.config.angles
        sel = flags if only_flagged else self.counts > 0
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write("angle_deg,line_index,count,mu,p_value,flagged\n")
            for a, l in zip(*np.nonzero(sel)):
                fh.write(f"{angles[a]!r},{l},{self.counts[a, l]},{self.mu[a, l]!r},"
                         f"{self.p_value[a, l]!r},{int(flags[a, l])}\n")


def accumulate(catalog: Catalog, config: HoughConfig = HoughConfig()) -> HoughResult:
    """Count records per (angle, strip) and score each count against the null."""
    b = catalog.bounds
    n_lines = config.lines_per_angle
    width = b.diagonal / n_lines
    cx, cy = b.center
    counts = np.zeros((config.n_angles, n_lines), dtype=np.int32)
    mu = np.zeros((config.n_angles, n_lines))
    starts = np.empty(config.n_angles)
    edges = np.arange(n_lines + 1) * width
    total = len(catalog)
    for k, angle in enumerate(config.angles):
        th = math.radians(angle)
        s, c = math.sin(th), math.cos(th)
        start = (-cx * s + cy * c) - 0.5 * b.diagonal
        starts[k] = start
        d = -catalog.x * s + catalog.y * c
        j = np.clip(np.floor((d - start) / width).astype(np.int64), 0, n_lines - 1)
        counts[k] = np.bincount(j, minlength=n_lines)
        frac = np.diff(strip_area_fraction(b, angle, start, start + edges))
        mu[k] = total * frac
    p = np.ones_like(mu)
    pos = mu > 0
    p[pos] = poisson_tail(counts[pos], mu[pos])
    p[~pos & (counts > 0)] = 0.0
    return HoughResult(config, b, counts, mu, p, starts, width)


def flag_lines(result: HoughResult, siglev: Optional[float] = None) -> list[tuple[int, int]]:
    """(angle index, line index) of every flagged accumulator."""
    return [(int(a), int(l)) for a, l in zip(*np.nonzero(result.flagged(siglev)))]


def line_reference(result: HoughResult, angle: float, x: float, y: float) -> tuple[int, int]:
    """Accumulator nearest to the line through ``(x, y)`` at ``angle`` degrees."""
    cfg = result.config
    step = 180.0 / cfg.n_angles
    k = int(math.floor((angle % 180.0) / step)) % cfg.n_angles
    th = math.radians(cfg.angles[k])
    d = -x * math.sin(th) + y * math.cos(th)
    j = int(math.floor((d - result.band_start[k]) / result.strip_width))
    return k, min(max(j, 0), cfg.lines_per_angle - 1)


def reference_detected(flags: np.ndarray, ref: tuple[int, int]) -> bool:
    """Whether a flagged accumulator lies within one angle cell and one strip of ``ref``.

    Crossing 0/180 degrees mirrors the strip index because the normal flips.
    """
    n_angles, n_lines = flags.shape
    a, l = ref
    for da in (-1, 0, 1):
        a2 = a + da
        mirror = a2 < 0 or a2 >= n_angles
        a2 %= n_angles
        for dl in (-1, 0, 1):
            l2 = l + dl
            if mirror:
                l2 = n_lines - 1 - l2
            if 0 <= l2 < n_lines and flags[a2, l2]:
                return True
    return False


def detected_count(result: HoughResult, refs: Sequence[tuple[int, int]], siglev: float) -> int:
    flags = result.flagged(siglev)
    return sum(reference_detected(flags, r) for r in refs)
