"""Exception types shared across the package."""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A Cholesky pivot was not strictly positive."""


class ConvergenceFailure(np.linalg.LinAlgError):
    """Iterative eigensolver hit its sweep cap."""


class DimensionMismatch(ValueError):
    pass


class NearZeroNormalizer(ZeroDivisionError):
    """RTF normalization entry vanished (speech absent or orthogonal RTF).

    ``column`` holds the offending external-microphone index when known.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ModelViolation(ValueError):
    """Inputs do not follow the rank-1 speech / uncorrelated external-noise model."""


class SignalTooShort(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


class CoincidentSourceMic(ValueError):
    pass


class SilentSignal(ValueError):
    pass


class NoActiveFrames(ValueError):
    pass


class ConfigError(ValueError):
    pass
