"""Exception types raised across the package."""


class InputDomainError(ValueError):
    """An argument lies outside the domain of the requested computation."""


class UnsupportedMeasureError(TypeError):
    """The operation is not defined for the given mixing measure."""


class ScaleError(ValueError):
    """Problem too large for an exhaustive or quadrature oracle."""


class EstimationError(RuntimeError):
    """A numerical optimiser failed to converge."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
