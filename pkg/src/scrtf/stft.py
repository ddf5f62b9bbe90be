"""Square-root-Hann STFT with 50 % overlap.

Layout conventions: time signals are ``(channels, samples)`` (1-D input is
treated as a single channel); spectrograms are ``(frames, bins, channels)``
so that ``spec.data[l, k]`` is the microphone vector ``y(k, l)``.

Frame ``l`` covers samples ``[l * hop, l * hop + frame_length)``.  The tail
of the signal is zero-padded up to the end of the last frame.  Only the
interior (one frame length away from either edge) is reconstructed exactly;
the first and last half frames lack their overlap partner.

Only the one-sided spectrum (``frame_length // 2 + 1`` bins) is kept.  For
energy bookkeeping the bins other than DC and Nyquist count twice:

    sum_n |w[n] x[n]|^2 = (|X_0|^2 + 2 sum_{0<k<N/2} |X_k|^2 + |X_{N/2}|^2) / N
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigMismatch, SignalTooShort

__all__ = ["StftConfig", "Spectrogram", "sqrt_hann", "analyze", "synthesize", "frame_energy"]


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    frame_length: int = 512
    hop: int = 256
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.frame_length <= 0 or self.frame_length % 2:
            raise ValueError("frame_length must be a positive even number")
        if self.hop * 2 != self.frame_length:
            raise ValueError("only 50% overlap is supported (hop = frame_length / 2)")
        if self.window != "sqrt_hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @classmethod
    def from_duration(cls, sample_rate=16000, frame_ms=32.0):
        n = int(round(sample_rate * frame_ms / 1000.0))
        n += n % 2
        return cls(sample_rate=sample_rate, frame_length=n, hop=n // 2)

    @property
    def n_bins(self):
        return self.frame_length // 2 + 1

    @property
    def hop_duration(self):
        return self.hop / self.sample_rate

    @property
    def frequencies(self):
        return np.arange(self.n_bins) * self.sample_rate / self.frame_length

    def n_frames(self, n_samples):
        if n_samples < self.frame_length:
            raise SignalTooShort(
                f"signal of {n_samples} samples is shorter than one frame ({self.frame_length})"
            )
        return 1 + -(-(n_samples - self.frame_length) // self.hop)


@dataclass
class Spectrogram:
    data: np.ndarray  # (frames, bins, channels), complex
    cfg: StftConfig
    n_samples: int

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_bins(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return self.data.shape[2]


def sqrt_hann(n):
    """Periodic square-root Hann window; its square is COLA at hop ``n/2``."""
    return np.sin(np.pi * np.arange(n) / n)


def _as_channels(signal):
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"expected (channels, samples) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    return x


def analyze(signal, cfg=StftConfig()):
    """Forward STFT of a ``(channels, samples)`` signal."""
    x = _as_channels(signal)
    n = x.shape[1]
    n_frames = cfg.n_frames(n)
    padded_len = (n_frames - 1) * cfg.hop + cfg.frame_length
    x = np.pad(x, ((0, 0), (0, padded_len - n)))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_length, axis=1)[:, ::cfg.hop]
    spec = np.fft.rfft(frames * sqrt_hann(cfg.frame_length), axis=-1)
    return Spectrogram(np.ascontiguousarray(spec.transpose(1, 2, 0)), cfg, n)


def synthesize(spec, cfg=None):
    """Inverse STFT by windowed overlap-add; returns ``(channels, samples)``."""
    if cfg is not None and cfg != spec.cfg:
        raise ConfigMismatch(f"spectrogram was produced with {spec.cfg}, not {cfg}")
    cfg = spec.cfg
    if spec.n_bins != cfg.n_bins:
        raise ConfigMismatch(f"{spec.n_bins} bins do not match frame length {cfg.frame_length}")
    frames = np.fft.irfft(spec.data.transpose(2, 0, 1), n=cfg.frame_length, axis=-1)
    frames *= sqrt_hann(cfg.frame_length)
    n_ch, n_frames, _ = frames.shape
    out = np.zeros((n_ch, (n_frames - 1) * cfg.hop + cfg.frame_length))
    half = cfg.hop
    # 50 % overlap: first halves land on hop-block l, second halves on block l + 1
    blocks = out.reshape(n_ch, n_frames + 1, half)
    blocks[:, :-1] += frames[:, :, :half]
    blocks[:, 1:] += frames[:, :, half:]
    return out[:, :spec.n_samples]


def frame_energy(spec):
    """Windowed time-domain energy per frame and channel, via Parseval."""
    p = np.abs(spec.data) ** 2
    n = spec.cfg.frame_length
    weights = np.full(spec.n_bins, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    return np.einsum("lkc,k->lc", p, weights) / n
