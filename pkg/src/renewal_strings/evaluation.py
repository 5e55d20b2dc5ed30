"""Detection quality against ground-truth labels, and the Hough comparison table."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import BACKGROUND, NO_LABEL
from .hough import HoughResult, detected_count, theoretical_false_positives


@dataclass(frozen=True)
class ConfusionSummary:
    fp: int
    fn: int
    det: int
    tot: int

    @property
    def fp_pct(self) -> float:
        """False positives as a percentage of detections."""
        if self.det == 0:
            warnings.warn("no detections: FP% undefined, reported as 0", RuntimeWarning, stacklevel=2)
            return 0.0
        return 100.0 * self.fp / self.det

    @property
    def fn_pct(self) -> float:
        """False negatives as a percentage of non-detections."""
        if self.tot == self.det:
            warnings.warn("every record detected: FN% undefined, reported as 0", RuntimeWarning, stacklevel=2)
            return 0.0
        return 100.0 * self.fn / (self.tot - self.det)

    def text(self) -> str:
        return (f"{'FP':>6} {'FP%':>8} {'FN':>6} {'FN%':>8} {'DET':>8} {'TOT':>9}\n"
                f"{self.fp:>6} {_sig(self.fp_pct, 2):>8} {self.fn:>6} {_sig(self.fn_pct, 2):>8} "
                f"{self.det:>8} {self.tot:>9}\n")

    def to_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["FP", "FP_pct", "FN", "FN_pct", "DET", "TOT"])
            w.writerow([self.fp, repr(self.fp_pct), self.fn, repr(self.fn_pct), self.det, self.tot])


def _sig(v: float, digits: int) -> str:
    return f"{v:.{digits}g}"


def confusion(flags, labels) -> ConfusionSummary:
    """FP = flagged background, FN = unflagged track; DET = flagged, TOT = all."""
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels)
    if flags.shape != labels.shape:
        raise ValueError(f"{flags.size} flags but {labels.size} labels")
    if np.any(labels == NO_LABEL):
        raise ValueError("every record needs a ground-truth label")
    track = labels != BACKGROUND
    return ConfusionSummary(
        fp=int(np.count_nonzero(flags & ~track)),
        fn=int(np.count_nonzero(~flags & track)),
        det=int(np.count_nonzero(flags)),
        tot=int(flags.size),
    )


@dataclass(frozen=True)
class SignificanceRow:
    siglev: float
    tracks_detected: int
    lines_flagged_total: int
    theoretical_fp: float


@dataclass(frozen=True)
class SignificanceTable:
    rows: tuple[SignificanceRow, ...]

    def text(self) -> str:
        lines = [f"{'SIGLEV':>10} {'DET':>5} {'TOT':>10} {'THEOR':>10}"]
        for r in self.rows:
            lines.append(f"{format_siglev(r.siglev):>10} {r.tracks_detected:>5} "
                         f"{_sci(r.lines_flagged_total):>10} {_sci(r.theoretical_fp):>10}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["siglev", "tracks_detected", "lines_flagged_total", "theoretical_fp"])
            for r in self.rows:
                w.writerow([repr(r.siglev), r.tracks_detected, r.lines_flagged_total, repr(r.theoretical_fp)])


def format_siglev(s: float) -> str:
    tail = 1.0 - s
    if tail < 1e-3:
        return f"1-10^{round(math.log10(tail))}"
    return f"{s:g}"


def _sci(v: float) -> str:
    if v >= 1e4:
        m, e = f"{v:.2e}".split("e")
        return f"{m}e{int(e)}"
    return f"{v:.4g}"


def significance_table(hough: HoughResult, truth_tracks: Sequence[tuple[int, int]],
                       levels: Sequence[float]) -> SignificanceTable:
    """One row per significance level: tracks found, lines flagged, expected false lines."""
    rows = []
    for s in levels:
        rows.append(SignificanceRow(
            siglev=s,
            tracks_detected=detected_count(hough, truth_tracks, s) if truth_tracks else 0,
            lines_flagged_total=int(np.count_nonzero(hough.flagged(s))),
            theoretical_fp=theoretical_false_positives(hough.config, s),
        ))
    return SignificanceTable(tuple(rows))
