class RenewalStringsError(Exception):
    """Base class for errors raised by this package."""


class CatalogError(RenewalStringsError):
    pass


class GeometryError(RenewalStringsError):
    pass


class ModelError(RenewalStringsError):
    pass


class ConfigError(RenewalStringsError):
    pass
