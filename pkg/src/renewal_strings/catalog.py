"""Catalog records and the plain CSV format used for input and output.

Positions are plate coordinates in microns. A catalog is held as parallel
numpy arrays (one entry per record) because every downstream stage works on
whole columns; :class:`ObjectRecord` is the per-row view.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CatalogError

CSV_COLUMNS = ("id", "x", "y", "semi_major", "semi_minor", "position_angle", "label")
DETECTION_COLUMNS = ("p_track", "flag", "detect_angle")

NO_LABEL = -1
BACKGROUND = 0

#: Padding added to each side of the tight bounding box when none is given.
BOUNDS_PAD = 1.0


def label_name(code: int) -> str:
    if code == NO_LABEL:
        return ""
    if code == BACKGROUND:
        return "background"
    return f"track_{code}"


def parse_label(text: str) -> int:
    text = text.strip()
    if not text:
        return NO_LABEL
    if text == "background":
        return BACKGROUND
    if text.startswith("track_"):
        suffix = text[len("track_"):]
        if suffix.isdigit() and int(suffix) >= 1:
            return int(suffix)
    raise ValueError(f"unknown label {text!r}")


@dataclass(frozen=True)
class Bounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x, y):
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    x: float
    y: float
    semi_major: Optional[float] = None
    semi_minor: Optional[float] = None
    position_angle: Optional[float] = None
    label: int = NO_LABEL

    def __post_init__(self):
        _check_record(self.x, self.y, self.semi_major, self.semi_minor, self.position_angle)


def _check_record(x, y, semi_major, semi_minor, position_angle):
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("position must be finite")
    if semi_major is not None:
        if semi_minor is None or not (semi_major >= semi_minor >= 0):
            raise ValueError("ellipse axes must satisfy semi_major >= semi_minor >= 0")
    if position_angle is not None and not (0.0 <= position_angle < 180.0):
        raise ValueError(f"position_angle {position_angle} outside [0, 180)")


def _opt(a: np.ndarray, i: int) -> Optional[float]:
    v = float(a[i])
    return None if math.isnan(v) else v


@dataclass(frozen=True, eq=False)
class Catalog:
    """Immutable column store of object records.

    Missing optional values are NaN in the float columns and ``NO_LABEL`` in
    ``labels``.
    """

    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    bounds: Bounds
    semi_major: np.ndarray = field(default=None)
    semi_minor: np.ndarray = field(default=None)
    position_angle: np.ndarray = field(default=None)
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.x)
        nan = np.full(n, np.nan)
        cols = {
            "ids": np.array(self.ids, dtype=np.int64),
            "x": np.array(self.x, dtype=np.float64),
            "y": np.array(self.y, dtype=np.float64),
            "semi_major": nan if self.semi_major is None else np.array(self.semi_major, dtype=np.float64),
            "semi_minor": nan.copy() if self.semi_minor is None else np.array(self.semi_minor, dtype=np.float64),
            "position_angle": nan.copy() if self.position_angle is None
            else np.array(self.position_angle, dtype=np.float64),
            "labels": np.full(n, NO_LABEL, dtype=np.int64) if self.labels is None
            else np.array(self.labels, dtype=np.int64),
        }
        for name, arr in cols.items():
            if arr.shape != (n,):
                raise CatalogError(f"column {name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(np.unique(self.ids)) != n:
            raise CatalogError("record ids are not unique")
        if n and not np.all(np.isfinite(self.x) & np.isfinite(self.y)):
            raise CatalogError("non-finite position")
        has_shape = ~np.isnan(self.semi_major)
        if np.any(has_shape & ~((self.semi_major >= self.semi_minor) & (self.semi_minor >= 0))):
            raise CatalogError("ellipse axes must satisfy semi_major >= semi_minor >= 0")
        pa = self.position_angle[~np.isnan(self.position_angle)]
        if np.any((pa < 0) | (pa >= 180)):
            raise CatalogError("position_angle outside [0, 180)")
        inside = self.bounds.contains(self.x, self.y)
        if not np.all(inside):
            bad = int(self.ids[np.argmin(inside)])
            raise CatalogError(f"record {bad} lies outside bounds {self.bounds.as_tuple()}")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def records(self) -> list[ObjectRecord]:
        return [self.record(i) for i in range(len(self))]

    def record(self, i: int) -> ObjectRecord:
        return ObjectRecord(
            id=int(self.ids[i]),
            x=float(self.x[i]),
            y=float(self.y[i]),
            semi_major=_opt(self.semi_major, i),
            semi_minor=_opt(self.semi_minor, i),
            position_angle=_opt(self.position_angle, i),
            label=int(self.labels[i]),
        )

    @classmethod
    def from_records(cls, records: Iterable[ObjectRecord], bounds: Optional[Bounds] = None) -> "Catalog":
        records = list(records)

        def col(name):
            return np.array(
                [np.nan if getattr(r, name) is None else getattr(r, name) for r in records],
                dtype=np.float64,
            )

        x, y = col("x"), col("y")
        if bounds is None:
            bounds = tight_bounds(x, y)
        return cls(
            ids=np.array([r.id for r in records], dtype=np.int64),
            x=x,
            y=y,
            bounds=bounds,
            semi_major=col("semi_major"),
            semi_minor=col("semi_minor"),
            position_angle=col("position_angle"),
            labels=np.array([r.label for r in records], dtype=np.int64),
        )

    def with_bounds(self, bounds: Bounds) -> "Catalog":
        return Catalog(self.ids, self.x, self.y, bounds, self.semi_major,
                       self.semi_minor, self.position_angle, self.labels)


def tight_bounds(x: np.ndarray, y: np.ndarray, pad: float = BOUNDS_PAD) -> Bounds:
    if len(x) == 0:
        raise CatalogError("cannot derive bounds from an empty catalog; pass explicit bounds")
    return Bounds(float(np.min(x)) - pad, float(np.max(x)) + pad,
                  float(np.min(y)) - pad, float(np.max(y)) + pad)


def _parse_float(text: str, name: str, lineno: int, optional: bool) -> float:
    text = text.strip()
    if not text:
        if optional:
            return math.nan
        raise CatalogError(f"line {lineno}: missing required column {name}")
    try:
        return float(text)
    except ValueError:
        raise CatalogError(f"line {lineno}: bad {name} value {text!r}") from None


def read_catalog(path, bounds: Optional[Bounds] = None) -> Catalog:
    """Read a catalog CSV.

    Without explicit ``bounds`` the catalog bounds are the tight bounding box
    of the positions padded by one micron on every side. Detection columns,
    if present, are ignored here (see :func:`read_detections`).
    """
    rows = _read_rows(path)
    n = len(rows)
    ids = np.empty(n, dtype=np.int64)
    cols = {k: np.empty(n) for k in ("x", "y", "semi_major", "semi_minor", "position_angle")}
    labels = np.empty(n, dtype=np.int64)
    for i, (lineno, row) in enumerate(rows):
        try:
            ids[i] = int(row["id"])
        except (ValueError, KeyError):
            raise CatalogError(f"line {lineno}: bad id {row.get('id')!r}") from None
        for name in cols:
            cols[name][i] = _parse_float(row.get(name) or "", name, lineno,
                                         optional=name not in ("x", "y"))
        try:
            _check_record(cols["x"][i], cols["y"][i], _opt(cols["semi_major"], i),
                          _opt(cols["semi_minor"], i), _opt(cols["position_angle"], i))
            labels[i] = parse_label(row.get("label") or "")
        except ValueError as exc:
            raise CatalogError(f"line {lineno}: {exc}") from None
    if bounds is None:
        bounds = tight_bounds(cols["x"], cols["y"])
    return Catalog(ids=ids, bounds=bounds, labels=labels, **cols)


def _read_rows(path) -> list[tuple[int, dict]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = {"id", "x", "y"} - set(reader.fieldnames)
        if missing:
            raise CatalogError(f"line 1: header lacks columns {sorted(missing)}")
        rows = []
        for row in reader:
            if None in row:
                raise CatalogError(f"line {reader.line_num}: too many fields")
            rows.append((reader.line_num, row))
        return rows


def read_detections(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(p_track, flag, detect_angle)`` columns from a detection CSV."""
    rows = _read_rows(path)
    p = np.empty(len(rows))
    flag = np.empty(len(rows), dtype=bool)
    angle = np.empty(len(rows))
    for i, (lineno, row) in enumerate(rows):
        if not all(k in row for k in DETECTION_COLUMNS):
            raise CatalogError(f"line {lineno}: detection columns missing")
        p[i] = _parse_float(row["p_track"], "p_track", lineno, optional=False)
        flag_text = row["flag"].strip()
        if flag_text not in ("0", "1"):
            raise CatalogError(f"line {lineno}: flag must be 0 or 1")
        flag[i] = flag_text == "1"
        angle[i] = _parse_float(row["detect_angle"], "detect_angle", lineno, optional=True)
    return p, flag, angle


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_catalog(catalog: Catalog, path, detections=None) -> None:
    """Write ``catalog`` as CSV, optionally with detection columns.

    Floats are written with ``repr`` so a read-back is exact.
    ``detect_angle`` is left empty for unflagged records.
    """
    header = list(CSV_COLUMNS)
    if detections is not None:
        if len(detections.p_track) != len(catalog):
            raise CatalogError("detections and catalog differ in length")
        header += DETECTION_COLUMNS
    try:
        fh = Path(path).open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise CatalogError(f"cannot write {path}: {exc}") from exc
    with fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(catalog)):
            row = [
                str(int(catalog.ids[i])),
                _fmt(catalog.x[i]),
                _fmt(catalog.y[i]),
                _fmt(catalog.semi_major[i]),
                _fmt(catalog.semi_minor[i]),
                _fmt(catalog.position_angle[i]),
                label_name(int(catalog.labels[i])),
            ]
            if detections is not None:
                flagged = bool(detections.flag[i])
                row += [
                    repr(float(detections.p_track[i])),
                    "1" if flagged else "0",
                    _fmt(detections.detect_angle[i]) if flagged else "",
                ]
            writer.writerow(row)


def concat(parts: Sequence[Catalog], bounds: Bounds, renumber: bool = True) -> Catalog:
    """Concatenate catalogs in order; ids are reassigned 0..n-1 when ``renumber``."""
    def cat(name, dtype):
        arrs = [getattr(p, name) for p in parts]
        return np.concatenate(arrs).astype(dtype) if arrs else np.empty(0, dtype=dtype)

    x = cat("x", np.float64)
    ids = np.arange(len(x), dtype=np.int64) if renumber else cat("ids", np.int64)
    return Catalog(ids=ids, x=x, y=cat("y", np.float64), bounds=bounds,
                   semi_major=cat("semi_major", np.float64), semi_minor=cat("semi_minor", np.float64),
                   position_angle=cat("position_angle", np.float64), labels=cat("labels", np.int64))
