"""Detect faint tracks in astronomical catalogs with a renewal-process HMM along candidate lines."""

from .catalog import Bounds, Catalog, read_catalog, write_catalog
from .detector import DetectionResult, DetectorConfig, flag, sweep
from .errors import CatalogError, ConfigError, GeometryError, ModelError, RenewalStringsError
from .generator import GeneratorConfig, TrackClass, sample_plate
from .hmm import RenewalHmmModel, default_model, forward_backward
from .hough import HoughConfig, accumulate

__all__ = [
    "Bounds", "Catalog", "read_catalog", "write_catalog",
    "DetectionResult", "DetectorConfig", "flag", "sweep",
    "CatalogError", "ConfigError", "GeometryError", "ModelError", "RenewalStringsError",
    "GeneratorConfig", "TrackClass", "sample_plate",
    "RenewalHmmModel", "default_model", "forward_backward",
    "HoughConfig", "accumulate",
]
