"""Per-bin covariance tracking with VAD gating, and batch oracle estimates.

Two interfaces compute the same recursion

    R <- lam * R + (1 - lam) * v v^H

:class:`CovarianceState` steps one STFT frame at a time;
:func:`track` runs a whole ``(frames, bins, M)`` stack at once by filtering
the outer products along the frame axis (gated updates become a filter over
the subsequence of active frames, held constant in between).
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DimensionMismatch, NoActiveFrames
from .linalg import hermitize

__all__ = [
    "smoothing_factor",
    "CovarianceState",
    "track",
    "oracle_covariances",
    "outer",
    "load_diagonal",
    "write_csv",
    "DIAGONAL_LOADING",
]

DIAGONAL_LOADING = 1e-10


def smoothing_factor(time_constant, hop_duration, mapping="exponential"):
    """Per-frame forgetting factor for a time constant in seconds.

    ``mapping="exponential"`` gives ``exp(-hop / tau)``; ``"linear"`` gives
    the first-order approximation ``1 - hop / tau``.
    """
    if not time_constant > 0 or not hop_duration > 0:
        raise ValueError("time constant and hop duration must be positive")
    if np.isinf(time_constant):
        return 1.0
    if mapping == "exponential":
        return float(np.exp(-hop_duration / time_constant))
    if mapping == "linear":
        lam = 1.0 - hop_duration / time_constant
        if lam <= 0:
            raise ValueError("linear mapping needs time_constant > hop_duration")
        return lam
    raise ValueError(f"unknown mapping {mapping!r}")


# 250 ms for the speech/noisy tracks and 1 s for noise, at a 16 ms hop
LAMBDA_SPEECH = smoothing_factor(0.25, 0.016)
LAMBDA_NOISE = smoothing_factor(1.0, 0.016)


def outer(v):
    """Stacked outer products ``v v^H`` over the last axis."""
    return v[..., :, None] * np.conj(v[..., None, :])


def load_diagonal(r, factor=DIAGONAL_LOADING):
    """Add ``factor * trace(R)/M`` to the diagonal (finite-data PD guard)."""
    r = np.asarray(r)
    m = r.shape[-1]
    tr = np.real(np.trace(r, axis1=-2, axis2=-1))
    return r + (factor * tr / m)[..., None, None] * np.eye(m)


@dataclass
class CovarianceState:
    """Recursively smoothed ``Ry``, ``Rx``, ``Rn`` for every frequency bin.

    The stored matrices follow the plain recursion started from zero.
    :meth:`normalized` divides by the accumulated weight ``1 - lam**count``,
    which turns the early frames into a proper weighted average.

    ``consistent_sum=True`` keeps ``ry`` equal to ``rx + rn`` after every
    update instead of tracking it from the noisy frames.
    """

    n_bins: int
    n_channels: int
    lambda_y: float = LAMBDA_SPEECH
    lambda_x: float = LAMBDA_SPEECH
    lambda_n: float = LAMBDA_NOISE
    consistent_sum: bool = False
    ry: np.ndarray = field(init=False)
    rx: np.ndarray = field(init=False)
    rn: np.ndarray = field(init=False)
    frames_seen: dict = field(init=False)

    def __post_init__(self):
        for lam in (self.lambda_y, self.lambda_x, self.lambda_n):
            if not 0.0 < lam < 1.0:
                raise ValueError("smoothing factors must lie in (0, 1)")
        shape = (self.n_bins, self.n_channels, self.n_channels)
        self.ry = np.zeros(shape, dtype=complex)
        self.rx = np.zeros(shape, dtype=complex)
        self.rn = np.zeros(shape, dtype=complex)
        self.frames_seen = {"ry": 0, "rx": 0, "rn": 0}

    @classmethod
    def from_time_constants(cls, cfg, n_channels, tau_y=0.25, tau_x=0.25, tau_n=1.0,
                            mapping="exponential", consistent_sum=False):
        lam = [smoothing_factor(t, cfg.hop_duration, mapping) for t in (tau_y, tau_x, tau_n)]
        return cls(cfg.n_bins, n_channels, *lam, consistent_sum=consistent_sum)

    def _step(self, name, lam, v):
        r = getattr(self, name)
        r = hermitize(lam * r + (1.0 - lam) * outer(v))
        setattr(self, name, r)
        self.frames_seen[name] += 1

    def update(self, y, vad, x=None, n=None):
        """Consume one frame ``y`` of shape ``(bins, M)``.

        With separated components (``x``, ``n``) the noise track is updated on
        every frame and the speech/noisy tracks only when ``vad`` is true.
        Without them (blind mode) ``y`` feeds the noise track during speech
        pauses and the noisy track during speech; ``rx`` is left untouched.
        """
        y = np.asarray(y)
        if y.shape != (self.n_bins, self.n_channels):
            raise DimensionMismatch(
                f"frame shape {y.shape} != ({self.n_bins}, {self.n_channels})"
            )
        oracle = x is not None and n is not None
        if oracle:
            self._step("rn", self.lambda_n, np.asarray(n))
            if vad:
                self._step("rx", self.lambda_x, np.asarray(x))
                if not self.consistent_sum:
                    self._step("ry", self.lambda_y, y)
            if self.consistent_sum:
                self.ry = self.rx + self.rn
                self.frames_seen["ry"] = self.frames_seen["rx"]
        elif vad:
            self._step("ry", self.lambda_y, y)
        else:
            self._step("rn", self.lambda_n, y)
        return self

    def normalized(self):
        """``(ry, rx, rn)`` divided by their accumulated smoothing weight."""
        out = []
        for name, lam in (("ry", self.lambda_y), ("rx", self.lambda_x), ("rn", self.lambda_n)):
            count = self.frames_seen[name]
            r = getattr(self, name)
            out.append(r / (1.0 - lam**count) if count else r.copy())
        if self.consistent_sum:
            out[0] = out[1] + out[2]
        return tuple(out)


def _gated_smooth(v, lam, gate, normalize):
    # v: (frames, ..., M) vectors; returns (frames, ..., M, M).  Only the
    # upper triangle is filtered; the lower one is its conjugate mirror.
    n_frames, m = v.shape[0], v.shape[-1]
    iu, ju = np.triu_indices(m)
    # position of every (row, col) in the triangle list, and which are mirrored
    pos = np.zeros((m, m), dtype=int)
    pos[iu, ju] = pos[ju, iu] = np.arange(iu.size)
    lower = np.tri(m, k=-1, dtype=bool).reshape(-1)
    if gate is None:
        gate = np.ones(n_frames, dtype=bool)
    counts = np.cumsum(gate)
    out = np.zeros(v.shape + (m,), dtype=complex)
    idx = np.flatnonzero(gate)
    if idx.size == 0:
        return out, counts
    va = v[idx]
    prods = va[..., iu] * np.conj(va[..., ju])
    filt = lfilter([1.0 - lam], [1.0, -lam], prods, axis=0)
    if normalize:
        filt /= (1.0 - lam ** np.arange(1, idx.size + 1)).reshape((-1,) + (1,) * (filt.ndim - 1))
    filt[..., iu == ju] = filt[..., iu == ju].real
    full = filt[..., pos.reshape(-1)]
    np.conjugate(full, out=full, where=lower)
    first = idx[0]  # frames from the first update onwards hold a state
    out[first:] = full.reshape(filt.shape[:-1] + (m, m))[counts[first:] - 1]
    return out, counts


def track(y, vad, x=None, n=None, lambda_y=LAMBDA_SPEECH, lambda_x=LAMBDA_SPEECH, lambda_n=LAMBDA_NOISE,
          normalize=True, consistent_sum=False):
    """Smoothed covariances for every frame; arrays are ``(frames, bins, M)``.

    Returns ``(ry, rx, rn, counts)`` with matrices of shape
    ``(frames, bins, M, M)`` holding the state *after* each frame, and
    ``counts`` the number of updates of ``(ry, rx, rn)`` so far per frame.
    Frames before a track's first update hold zeros.  Blind mode (no
    components) mirrors :meth:`CovarianceState.update`.
    """
    vad = np.asarray(vad, dtype=bool)
    if y.shape[0] != vad.shape[0]:
        raise DimensionMismatch("vad length differs from frame count")
    if x is not None and n is not None:
        rn, cn = _gated_smooth(n, lambda_n, None, normalize)
        rx, cx = _gated_smooth(x, lambda_x, vad, normalize)
        if consistent_sum:
            ry, cy = rx + rn, cx
        else:
            ry, cy = _gated_smooth(y, lambda_y, vad, normalize)
    else:
        ry, cy = _gated_smooth(y, lambda_y, vad, normalize)
        rn, cn = _gated_smooth(y, lambda_n, ~vad, normalize)
        rx, cx = np.zeros_like(ry), np.zeros_like(cy)
    return ry, rx, rn, np.stack([cy, cx, cn], axis=-1)


def oracle_covariances(x_frames, n_frames, vad=None):
    """Batch sample covariances from separated components.

    ``Rx`` averages the speech-active frames only (all frames when ``vad``
    is None), ``Rn`` averages every frame, and ``Ry = Rx + Rn``.
    Inputs are ``(frames, bins, M)``; outputs ``(bins, M, M)``.
    """
    x_frames = np.asarray(x_frames)
    n_frames = np.asarray(n_frames)
    if x_frames.shape != n_frames.shape:
        raise DimensionMismatch("speech and noise frame stacks differ in shape")
    if vad is None:
        vad = np.ones(x_frames.shape[0], dtype=bool)
    vad = np.asarray(vad, dtype=bool)
    if not vad.any():
        raise NoActiveFrames("no speech-active frames to estimate Rx from")
    xs = x_frames[vad]
    rx = np.einsum("lki,lkj->kij", xs, np.conj(xs)) / xs.shape[0]
    rn = np.einsum("lki,lkj->kij", n_frames, np.conj(n_frames)) / n_frames.shape[0]
    rx, rn = hermitize(rx), hermitize(rn)
    return rx, rn, rx + rn


def write_csv(path, matrices):
    """Dump ``(bins, M, M)`` matrices as rows ``bin,row,col,real,imag``."""
    matrices = np.asarray(matrices)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "row", "col", "real", "imag"])
        for k, i, j in np.ndindex(*matrices.shape):
            v = matrices[k, i, j]
            w.writerow([k, i, j, repr(float(v.real)), repr(float(v.imag))])
