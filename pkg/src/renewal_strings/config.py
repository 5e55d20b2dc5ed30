"""JSON run configuration with sections ``generator``, ``detector``, ``hough`` and ``io``.

Missing sections and keys take the module defaults; unknown keys are
rejected so that typos surface as errors instead of silently using defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .catalog import Bounds
from .density import DensityGrid
from .detector import DetectorConfig
from .errors import ConfigError, RenewalStringsError
from .generator import GeneratorConfig, TrackClass, gradient_grid
from .hmm import RenewalHmmModel, default_model
from .hough import TABLE_LEVELS, HoughConfig


@dataclass(frozen=True)
class IoConfig:
    render_scale: float = 0.002  # SVG pixels per micron
    render_min_radius: float = 1.0  # pixels
    hough_dump: str = "flagged"  # or "all"


@dataclass(frozen=True)
class HoughRun:
    config: HoughConfig = HoughConfig()
    levels: tuple[float, ...] = TABLE_LEVELS
    truth_tracks: tuple[tuple[float, float, float], ...] = ()  # (angle_deg, x, y)


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    hough: HoughRun = HoughRun()
    io: IoConfig = IoConfig()


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def _model(data: Optional[dict]) -> RenewalHmmModel:
    if data is None:
        return default_model()
    _check_keys("detector.model", data, ("transition", "track_mean", "alignment_prob", "initial"))
    base = default_model()
    return RenewalHmmModel(
        transition=data.get("transition", base.transition),
        track_mean=data.get("track_mean", base.track_mean),
        alignment_prob=data["alignment_prob"] if "alignment_prob" in data else base.alignment_prob,
        initial=data.get("initial"),
    )


def _bounds(value) -> Bounds:
    if not (isinstance(value, list) and len(value) == 4):
        raise ConfigError("bounds must be [x_min, x_max, y_min, y_max]")
    b = Bounds(*map(float, value))
    if not (b.width > 0 and b.height > 0):
        raise ConfigError("bounds must have positive width and height")
    return b


def _background(value, bounds: Bounds):
    if isinstance(value, (int, float)):
        return float(value)
    _check_keys("generator.background", value, ("rate", "rates", "gradient"))
    if len(value) != 1:
        raise ConfigError("generator.background takes exactly one of rate, rates, gradient")
    if "rate" in value:
        return float(value["rate"])
    if "rates" in value:
        rates = np.array(value["rates"], dtype=float)
        if rates.ndim != 2:
            raise ConfigError("background.rates must be a 2-D array [nx][ny]")
        return DensityGrid(rates.shape[0], rates.shape[1], bounds, rates)
    g = value["gradient"]
    _check_keys("generator.background.gradient", g, ("total", "ratio", "nx", "ny"))
    return gradient_grid(bounds, float(g["total"]), float(g.get("ratio", 2.0)),
                         int(g.get("nx", 200)), int(g.get("ny", 200)))


def _generator(data: dict) -> GeneratorConfig:
    _check_keys("generator", data, _names(GeneratorConfig))
    kw: dict[str, Any] = dict(data)
    bounds = _bounds(kw["bounds"]) if "bounds" in kw else GeneratorConfig.bounds
    kw["bounds"] = bounds
    if "background" in kw:
        kw["background"] = _background(kw["background"], bounds)
    if "birth_mean" in kw and kw["birth_mean"] is None:
        kw["birth_mean"] = math.inf
    if "track_classes" in kw:
        classes = []
        for i, c in enumerate(kw["track_classes"]):
            _check_keys(f"generator.track_classes[{i}]", c, _names(TrackClass))
            classes.append(TrackClass(**c))
        kw["track_classes"] = tuple(classes)
    if "background_semi_major" in kw:
        kw["background_semi_major"] = tuple(kw["background_semi_major"])
    return GeneratorConfig(**kw)


def _detector(data: dict) -> DetectorConfig:
    _check_keys("detector", data, _names(DetectorConfig))
    kw = dict(data)
    kw["model"] = _model(kw.get("model"))
    return DetectorConfig(**kw)


def _hough(data: dict) -> HoughRun:
    extra = ("levels", "truth_tracks")
    _check_keys("hough", data, _names(HoughConfig) + list(extra))
    cfg = HoughConfig(**{k: v for k, v in data.items() if k not in extra})
    levels = tuple(float(s) for s in data.get("levels", TABLE_LEVELS))
    truth = tuple(tuple(map(float, t)) for t in data.get("truth_tracks", ()))
    if any(len(t) != 3 for t in truth):
        raise ConfigError("hough.truth_tracks entries are [angle_deg, x, y]")
    return HoughRun(cfg, levels, truth)


def parse_config(data: dict) -> RunConfig:
    _check_keys("config", data, ("generator", "detector", "hough", "io"))
    try:
        io = data.get("io", {})
        _check_keys("io", io, _names(IoConfig))
        return RunConfig(
            generator=_generator(data.get("generator", {})),
            detector=_detector(data.get("detector", {})),
            hough=_hough(data.get("hough", {})),
            io=IoConfig(**io),
        )
    except ConfigError:
        raise
    except (RenewalStringsError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(data)
