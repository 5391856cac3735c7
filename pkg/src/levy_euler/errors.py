"""Exception hierarchy shared by the package."""


class LevyEulerError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(LevyEulerError, ValueError):
    """Invalid measure, sampler, scheme or experiment configuration."""


class NumericalFailure(LevyEulerError, RuntimeError):
    """A computation produced non-finite values or failed a self-check."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class QuadratureError(NumericalFailure):
    """Adaptive quadrature could not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SamplerError(LevyEulerError, RuntimeError):
    """Path generation cannot meet its accuracy target within budget."""

    def __init__(self, message, required_cutoff=None):
        super().__init__(message)
        self.required_cutoff = required_cutoff


class ThresholdFailure(LevyEulerError):
    """An acceptance threshold was not met (used by ``--assert``)."""
