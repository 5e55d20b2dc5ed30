"""Piecewise-constant estimate of the background point rate.

The plate is gridded into ``nx * ny`` equal boxes; the rate of a box is its
point count over its area. Boxes are half-open except along the top and
right plate edges, which are closed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Bounds, Catalog
from .errors import GeometryError

DEFAULT_GRID = (200, 200)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    nx: int
    ny: int
    bounds: Bounds
    rates: np.ndarray  # shape (nx, ny), points per square micron
    counts: np.ndarray = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise GeometryError("grid needs at least one box per axis")
        if not self.bounds.area > 0:
            raise GeometryError("grid bounds have zero area")
        rates = np.array(self.rates, dtype=np.float64)
        if rates.shape != (self.nx, self.ny):
            raise GeometryError(f"rates shape {rates.shape} != ({self.nx}, {self.ny})")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise GeometryError("rates must be finite and non-negative")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def box_area(self) -> float:
        return self.bounds.area / (self.nx * self.ny)

    def box_index(self, x, y):
        """Box indices ``(ix, iy)`` for positions; raises if any lies outside."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not np.all(self.bounds.contains(x, y)):
            raise GeometryError("point outside grid bounds")
        b = self.bounds
        ix = np.floor((x - b.x_min) * self.nx / b.width).astype(np.int64)
        iy = np.floor((y - b.y_min) * self.ny / b.height).astype(np.int64)
        return np.minimum(ix, self.nx - 1), np.minimum(iy, self.ny - 1)

    def lookup(self, x, y):
        ix, iy = self.box_index(x, y)
        out = self.rates[ix, iy]
        return float(out) if np.ndim(out) == 0 else out

    def linear_rate(self, x, y, w: float):
        """Rate per micron along a strip of width ``w`` through ``(x, y)``."""
        return self.lookup(x, y) * w

    def to_csv(self, path) -> None:
        counts = self.counts if self.counts is not None else np.full((self.nx, self.ny), np.nan)
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write("ix,iy,count,rate\n")
            for ix in range(self.nx):
                for iy in range(self.ny):
                    c = counts[ix, iy]
                    fh.write(f"{ix},{iy},{'' if np.isnan(c) else int(c)},{self.rates[ix, iy]!r}\n")


def estimate_grid(catalog: Catalog, nx: int = DEFAULT_GRID[0], ny: int = DEFAULT_GRID[1]) -> DensityGrid:
    """Count records per box; empty boxes are floored to one point."""
    b = catalog.bounds
    if not b.area > 0:
        raise GeometryError("degenerate catalog bounds")
    probe = DensityGrid(nx, ny, b, np.zeros((nx, ny)))
    counts = np.zeros((nx, ny), dtype=np.int64)
    if len(catalog):
        ix, iy = probe.box_index(catalog.x, catalog.y)
        np.add.at(counts, (ix, iy), 1)
    rates = np.maximum(counts, 1) / probe.box_area
    return DensityGrid(nx, ny, b, rates, counts)


def constant_grid(bounds: Bounds, rate: float) -> DensityGrid:
    return DensityGrid(1, 1, bounds, np.array([[rate]], dtype=np.float64))
