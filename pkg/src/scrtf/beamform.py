"""RTF-steered MVDR beamformer and SNR measurements."""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .covariance import DIAGONAL_LOADING, load_diagonal
from .errors import DimensionMismatch, NoActiveFrames
from .stft import Spectrogram, synthesize

__all__ = [
    "mvdr_weights",
    "mvdr_from_solved",
    "apply",
    "narrowband_output_snr",
    "vad_to_samples",
    "broadband_snr_db",
    "shadow_filter_broadband_snr",
    "SnrReport",
]


def mvdr_weights(rn, h, loading=DIAGONAL_LOADING):
    """``w = Rn^-1 h / (h^H Rn^-1 h)`` per bin.

    ``rn`` is ``(..., M, M)`` and ``h`` is ``(..., M)``.  ``Rn`` is diagonally
    loaded by ``loading * trace/M`` before the solve (pass 0 to disable).
    """
    rn = np.asarray(rn, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if rn.shape[-1] != h.shape[-1]:
        raise DimensionMismatch(f"Rn is {rn.shape[-1]}x{rn.shape[-1]} but h has {h.shape[-1]} entries")
    if loading:
        rn = load_diagonal(rn, loading)
    return mvdr_from_solved(h, linalg.solve_hermitian(rn, h))


def mvdr_from_solved(h, g):
    """MVDR weights from a steering vector ``h`` and ``g = Rn^-1 h``."""
    den = np.sum(np.conj(h) * g, axis=-1)
    return g / np.real(den)[..., None]


def apply(w, spec):
    """Beamformer output ``Z = w^H y`` as a single-channel spectrogram.

    ``w`` is ``(bins, M)`` (fixed) or ``(frames, bins, M)`` (time-varying).
    """
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    w = np.asarray(w)
    if w.shape[-1] != data.shape[-1] or w.shape[-2] != data.shape[-2]:
        raise DimensionMismatch(f"weights {w.shape} do not fit spectrogram {data.shape}")
    sub = "km,lkm->lk" if w.ndim == 2 else "lkm,lkm->lk"
    z = np.einsum(sub, np.conj(w), data)
    if isinstance(spec, Spectrogram):
        return Spectrogram(z[..., None], spec.cfg, spec.n_samples)
    return z


def narrowband_output_snr(w, rx, rn):
    """``(biased, unbiased)`` output SNR; biased uses ``Ry = Rx + Rn``."""
    w = np.asarray(w, dtype=complex)
    px = _quad(w, rx)
    pn = _quad(w, rn)
    if np.any(pn <= 0):
        raise ZeroDivisionError("beamformer output noise power is zero")
    py = _quad(w, np.asarray(rx) + rn)
    return py / pn, px / pn


def _quad(w, r):
    return np.real((np.conj(w)[..., None, :] @ r @ w[..., None])[..., 0, 0])


def vad_to_samples(vad, cfg, n_samples):
    """Sample mask: every sample covered by at least one active frame."""
    vad = np.asarray(vad, dtype=bool)
    blocks = np.zeros(len(vad) + 1, dtype=bool)
    # frame l spans hop-blocks l and l + 1
    blocks[:-1] |= vad
    blocks[1:] |= vad
    return np.repeat(blocks, cfg.hop)[:n_samples]


def broadband_snr_db(speech, noise, mask=None):
    """``10 log10(sum s^2 / sum n^2)`` over the masked samples; +inf for silent noise."""
    speech = np.asarray(speech).reshape(-1)
    noise = np.asarray(noise).reshape(-1)
    if mask is not None:
        if not np.any(mask):
            raise NoActiveFrames("no active samples to measure SNR on")
        speech, noise = speech[mask], noise[mask]
    es = np.sum(speech**2)
    en = np.sum(noise**2)
    if en == 0:
        return float("inf")
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(es / en))


def shadow_filter_broadband_snr(w, speech_spec, noise_spec, vad):
    """Broadband output SNR (dB) of ``w`` measured on the separated components.

    The same weights filter the speech and the noise spectrogram; both are
    resynthesised and the SNR is taken over samples of speech-active frames.
    """
    vad = np.asarray(vad, dtype=bool)
    if not vad.any():
        raise NoActiveFrames("vad marks no active frame")
    zs = synthesize(apply(w, speech_spec))[0]
    zn = synthesize(apply(w, noise_spec))[0]
    mask = vad_to_samples(vad, speech_spec.cfg, speech_spec.n_samples)
    return broadband_snr_db(zs, zn, mask)


@dataclass
class SnrReport:
    """SNR summary of one beamformer.

    ``narrowband_in`` is ``(frames, bins, Me)`` external-mic input SNR (dB),
    ``narrowband_out`` ``(frames, bins)`` unbiased output SNR (dB).
    """

    estimator: str
    snr_in_db: float
    snr_out_db: float
    narrowband_in: np.ndarray = None
    narrowband_out: np.ndarray = None
    per_side: dict = field(default_factory=dict)

    @property
    def delta_snr_db(self):
        return self.snr_out_db - self.snr_in_db
