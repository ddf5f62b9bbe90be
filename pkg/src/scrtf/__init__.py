"""Spatial-coherence RTF estimation with external microphones.

Submodules
----------
linalg      complex Hermitian Cholesky / eigensolvers / generalized principal vector
stft        sqrt-Hann analysis-synthesis filterbank
scene       free-field moving-source scenes in a diffuse noise field
covariance  recursive and batch covariance estimation
rtf         SC estimates, mSNR weight combination and bias analysis
beamform    MVDR beamformer and SNR metrics
experiment  end-to-end pipeline and identity battery
"""

from . import beamform, covariance, linalg, rtf, scene, stft
from .errors import (
    ConfigError,
    ConvergenceFailure,
    DimensionMismatch,
    ModelViolation,
    NearZeroNormalizer,
    NotPositiveDefinite,
)

__version__ = "0.1.0"

__all__ = [
    "beamform",
    "covariance",
    "linalg",
    "rtf",
    "scene",
    "stft",
    "ConfigError",
    "ConvergenceFailure",
    "DimensionMismatch",
    "ModelViolation",
    "NearZeroNormalizer",
    "NotPositiveDefinite",
]
