"""Exception hierarchy shared by all modules."""


class EdgeScaleError(Exception):
    """Base class for library errors."""


class ConfigError(EdgeScaleError, ValueError):
    """Invalid parameters, shapes or grids."""


class DomainError(EdgeScaleError, ValueError):
    """Inputs outside the mathematical domain of an operation."""


class SamplingError(EdgeScaleError, RuntimeError):
    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts


class IntegrationError(EdgeScaleError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitError(EdgeScaleError, ValueError):
    """Not enough usable data to fit a tail model."""
