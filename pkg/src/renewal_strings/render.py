"""Standalone SVG scatter plots of catalogs drawn as ellipses."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import quoteattr

import numpy as np

from .catalog import Catalog

PLAIN_STROKE = "#4a4a4a"
FLAG_STROKE = "#d62728"


def render_svg(catalog: Catalog, flags: Optional[np.ndarray] = None, scale: float = 0.002,
               min_radius: float = 1.0) -> str:
    """One ``<ellipse>`` per record; ``scale`` is pixels per catalog unit.

    Records without shape columns are drawn as circles of ``min_radius``
    pixels. The y axis is flipped so that north points up.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    b = catalog.bounds
    width = max(b.width * scale, 1.0)
    height = max(b.height * scale, 1.0)
    flags = np.zeros(len(catalog), dtype=bool) if flags is None else np.asarray(flags, dtype=bool)
    if flags.shape != (len(catalog),):
        raise ValueError("one flag per record is required")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3f}" height="{height:.3f}" '
        f'viewBox="0 0 {width:.3f} {height:.3f}">',
        f'<rect x="0" y="0" width="{width:.3f}" height="{height:.3f}" fill="white"/>',
    ]
    # unflagged first so flagged records are drawn on top
    for i in np.concatenate([np.nonzero(~flags)[0], np.nonzero(flags)[0]]):
        cx = (catalog.x[i] - b.x_min) * scale
        cy = (b.y_max - catalog.y[i]) * scale
        a, bb, pa = catalog.semi_major[i], catalog.semi_minor[i], catalog.position_angle[i]
        rx = min_radius if math.isnan(a) else max(a * scale, min_radius)
        ry = rx if math.isnan(bb) else max(bb * scale, min_radius)
        rot = 0.0 if math.isnan(pa) else -pa  # counter-clockwise in catalog, y flipped
        stroke = FLAG_STROKE if flags[i] else PLAIN_STROKE
        sw = 0.6 if flags[i] else 0.3
        out.append(f'<ellipse id={quoteattr(str(int(catalog.ids[i])))} cx="{cx:.3f}" cy="{cy:.3f}" '
                   f'rx="{rx:.3f}" ry="{ry:.3f}" transform="rotate({rot:.3f} {cx:.3f} {cy:.3f})" '
                   f'fill="none" stroke="{stroke}" stroke-width="{sw}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, catalog: Catalog, flags: Optional[np.ndarray] = None, scale: float = 0.002,
              min_radius: float = 1.0) -> None:
    Path(path).write_text(render_svg(catalog, flags, scale, min_radius), encoding="utf-8")
