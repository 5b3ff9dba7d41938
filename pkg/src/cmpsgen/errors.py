"""Exception types shared across the package."""


class CmpsError(Exception):
    """Base class for all package errors."""


class ZeroNormError(CmpsError):
    """Latent-state norm or trace collapsed below the underflow floor.

    Carries the trajectory step index when raised inside a recursion.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class NonFiniteError(CmpsError):
    """A loss or gradient entry became NaN/Inf."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class InsufficientSamplesError(CmpsError):
    """A statistic was requested with too few samples."""


class GridMismatchError(CmpsError):
    """Empirical and analytic statistics live on different grids."""


class OutOfRangeError(CmpsError):
    """Requested slice indices fall outside the available matrix."""


class QuadratureError(CmpsError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class ConfigError(CmpsError):
    """Invalid or unknown configuration entry.

    ``key`` names the offending entry for CLI diagnostics.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class FormatError(CmpsError):
    """Malformed on-disk dataset or checkpoint file."""
