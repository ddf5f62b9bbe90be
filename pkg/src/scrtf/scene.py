"""Synthetic acoustic scenes: a moving talker, a local array and external mics.

Speech reaches every microphone through a free-field path (propagation delay
plus ``1/d`` attenuation) realised with a windowed-sinc fractional-delay
filter.  The trajectory is cut into short segments with a fixed source
position each; neighbouring segments are cross-faded over one STFT frame.
Because the path is free-field, the true RTF of every segment is known in
closed form (:func:`steering_rtf`).

Background noise is a spherically isotropic field on the local array and
independent noise on every external microphone, so the noise covariance has
zero rows/columns for the external mics apart from their diagonal.

Random streams: ``SeedSequence(seed).spawn(2)`` gives one child for the source
material and one for the noise; the noise child draws white Gaussian
samples for all channels at once (channel-major).  The per-frequency mixing is
then a deterministic function of those samples.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from . import linalg
from .errors import CoincidentSourceMic, SilentSignal
from .stft import StftConfig, analyze, frame_energy

__all__ = [
    "MicGeometry",
    "SourceTrajectory",
    "SceneConfig",
    "LabeledRecording",
    "steering_rtf",
    "fractional_delay_filter",
    "speech_shaped_bursts",
    "synthesize_speech",
    "spherical_coherence",
    "synthesize_diffuse_noise",
    "mix_at_snr",
    "oracle_vad",
    "simulate",
    "binaural_geometry",
    "default_scene",
]

SPEED_OF_SOUND = 343.0


@dataclass
class MicGeometry:
    """Microphone positions in metres; ``lma_positions[0]`` is the reference.

    ``side_references`` lists the LMA indices used as reference microphone
    when the SNR improvement is averaged over sub-arrays (e.g. left and
    right hearing aid).
    """

    lma_positions: np.ndarray
    external_positions: np.ndarray
    side_references: tuple = (0,)

    def __post_init__(self):
        self.lma_positions = np.atleast_2d(np.asarray(self.lma_positions, dtype=float))
        self.external_positions = np.atleast_2d(np.asarray(self.external_positions, dtype=float))
        if self.lma_positions.shape[1] != 3 or self.external_positions.shape[1] != 3:
            raise ValueError("positions must be 3-D coordinates")
        if self.ma < 1 or self.me < 1:
            raise ValueError("need at least one LMA and one external microphone")
        pos = self.positions
        dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        if np.any(dist[np.triu_indices(self.m, 1)] == 0):
            raise ValueError("microphone positions must be distinct")
        self.side_references = tuple(int(i) for i in self.side_references)
        if not all(0 <= i < self.ma for i in self.side_references):
            raise ValueError("side references must index LMA microphones")

    @property
    def ma(self):
        return self.lma_positions.shape[0]

    @property
    def me(self):
        return self.external_positions.shape[0]

    @property
    def m(self):
        return self.ma + self.me

    @property
    def positions(self):
        return np.vstack([self.lma_positions, self.external_positions])

    def reordered(self, reference):
        """Same geometry with LMA microphone ``reference`` moved to index 0."""
        order = [reference] + [i for i in range(self.ma) if i != reference]
        return MicGeometry(self.lma_positions[order], self.external_positions, (0,))

    def channel_order(self, reference):
        return [reference] + [i for i in range(self.m) if i != reference]


@dataclass
class SourceTrajectory:
    """Piecewise-linear source path through ``(time, position)`` waypoints."""

    times: np.ndarray
    positions: np.ndarray
    source_signal: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if len(self.times) != len(self.positions):
            raise ValueError("one position per waypoint time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")

    @classmethod
    def static(cls, position, duration, source_signal=None):
        return cls([0.0, duration], [position, position], source_signal)

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [np.interp(t, self.times, self.positions[:, i]) for i in range(3)], axis=-1
        )


@dataclass
class SceneConfig:
    geometry: MicGeometry
    trajectory: SourceTrajectory
    duration: float = 30.0
    sample_rate: int = 16000
    target_input_snr_lma_db: float = 0.0
    speed_of_sound: float = SPEED_OF_SOUND
    noise_field: str = "spherically_diffuse"
    seed: int = 0
    segment_duration: float = 0.25
    fd_taps: int = 64
    coherence_loading: float = 1e-6
    vad_threshold: float = 1e-4
    noise_spectrum: str = "speech"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.noise_field not in ("spherically_diffuse", "uncorrelated"):
            raise ValueError(f"unknown noise field {self.noise_field!r}")
        if self.noise_spectrum not in ("speech", "white"):
            raise ValueError(f"unknown noise spectrum {self.noise_spectrum!r}")
        t = self.trajectory.times
        if t[0] > 0 or t[-1] < self.duration - 1e-9:
            raise ValueError("trajectory must span [0, duration]")

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))


@dataclass
class LabeledRecording:
    """Separately available speech and noise plus their sum.

    ``oracle_rtf[s]`` is the ``(bins, M)`` RTF of trajectory segment ``s``,
    valid between ``segment_times[s]`` and ``segment_times[s + 1]``.
    """

    speech: np.ndarray
    noise: np.ndarray
    mixture: np.ndarray
    vad: np.ndarray
    sample_rate: int
    oracle_rtf: np.ndarray = None
    segment_times: np.ndarray = None
    noise_scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    def oracle_rtf_for_frames(self, cfg):
        """Per-frame ``(frames, bins, M)`` true RTF, by frame-centre time."""
        n_frames = self.vad.shape[0]
        centres = (np.arange(n_frames) * cfg.hop + cfg.frame_length / 2) / cfg.sample_rate
        seg = np.searchsorted(self.segment_times, centres, side="right") - 1
        seg = np.clip(seg, 0, self.oracle_rtf.shape[0] - 1)
        return self.oracle_rtf[seg]


def steering_rtf(geometry, source_pos, cfg=StftConfig(), c=SPEED_OF_SOUND):
    """Free-field RTF of every microphone relative to the reference mic.

    Entry ``m`` at frequency ``f`` is
    ``(d_ref / d_m) * exp(-2j*pi*f*(d_m - d_ref)/c)``.  Shape ``(bins, M)``.
    """
    pos = geometry.positions if isinstance(geometry, MicGeometry) else np.asarray(geometry)
    d = np.linalg.norm(pos - np.asarray(source_pos, dtype=float), axis=-1)
    if np.any(d <= 0):
        raise CoincidentSourceMic("source position coincides with a microphone")
    f = cfg.frequencies[:, None]
    rtf = (d[0] / d)[None, :] * np.exp(-2j * np.pi * f * (d - d[0])[None, :] / c)
    rtf[:, 0] = 1.0
    return rtf


def fractional_delay_filter(delay, n_taps=64, beta=8.0):
    """Kaiser-windowed sinc approximating a delay of ``delay`` samples.

    Returns ``(start, taps)`` such that ``y[t] = sum_i taps[i] * x[t - start - i]``.
    """
    centre = n_taps // 2 - 1
    whole = int(np.floor(delay))
    frac = delay - whole
    u = np.arange(n_taps) - centre - frac
    half = n_taps / 2.0
    win = np.i0(beta * np.sqrt(np.clip(1.0 - (u / half) ** 2, 0.0, None))) / np.i0(beta)
    return whole - centre, np.sinc(u) * win


def _speech_shaping(fs):
    # long-term speech spectrum: 2nd-order band-pass 100 Hz - 1 kHz, -12 dB/oct above
    return sps.butter(2, [100.0, 1000.0], btype="bandpass", fs=fs, output="sos")


def speech_shaped_bursts(duration, sample_rate, rng, burst_range=(0.6, 2.0),
                         pause_range=(0.15, 0.5), ramp=0.01):
    """Speech-shaped Gaussian noise switched on and off like talk spurts."""
    n = int(round(duration * sample_rate))
    noise = sps.sosfilt(_speech_shaping(sample_rate), rng.standard_normal(n))
    env = np.zeros(n)
    ramp_n = max(1, int(ramp * sample_rate))
    fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp_n) / ramp_n)
    t = int(rng.uniform(0.05, 0.2) * sample_rate)
    while t < n:
        length = int(rng.uniform(*burst_range) * sample_rate)
        gain = 10 ** (rng.normal(0.0, 3.0) / 20)
        seg = np.full(length, gain)
        k = min(ramp_n, length // 2)
        seg[:k] *= fade[:k]
        seg[length - k:] *= fade[:k][::-1]
        stop = min(n, t + length)
        env[t:stop] = seg[: stop - t]
        t = stop + int(rng.uniform(*pause_range) * sample_rate)
    out = noise * env
    return out / np.sqrt(np.mean(out**2))


def _crossfade_weights(n, fs, boundaries, fade_len):
    # boundaries: segment edge times incl. 0 and duration; linear ramps centred on inner edges
    t = np.arange(n) / fs
    ramps = [np.ones(n)]
    for tb in boundaries[1:-1]:
        ramps.append(np.clip((t - tb) * fs / fade_len + 0.5, 0.0, 1.0))
    ramps.append(np.zeros(n))
    return [ramps[s] - ramps[s + 1] for s in range(len(boundaries) - 1)]


def _segment_edges(duration, seg_dur):
    edges = np.arange(0.0, duration, seg_dur)
    return np.append(edges, duration)


def synthesize_speech(cfg, stft_cfg=None, source_signal=None):
    """Render the moving source at every microphone.

    Returns ``(speech, oracle_rtf, segment_times)`` where ``speech`` is
    ``(M, samples)`` and ``oracle_rtf`` is ``(segments, bins, M)``.
    """
    stft_cfg = stft_cfg or StftConfig.from_duration(cfg.sample_rate)
    fs = cfg.sample_rate
    n = cfg.n_samples
    if source_signal is None:
        source_signal = cfg.trajectory.source_signal
    if source_signal is None:
        src_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
        source_signal = speech_shaped_bursts(cfg.duration, fs, src_rng)
    src = np.zeros(n)
    src[: min(n, len(source_signal))] = np.asarray(source_signal, dtype=float)[:n]

    pos = cfg.geometry.positions
    edges = _segment_edges(cfg.duration, cfg.segment_duration)
    mids = 0.5 * (edges[:-1] + edges[1:])
    src_pos = cfg.trajectory.position_at(mids)
    weights = _crossfade_weights(n, fs, edges, stft_cfg.frame_length)

    dist = np.linalg.norm(pos[None, :, :] - src_pos[:, None, :], axis=-1)  # (segments, M)
    if np.any(dist <= 0):
        raise CoincidentSourceMic("trajectory passes through a microphone")
    max_delay = int(np.ceil(dist.max() / cfg.speed_of_sound * fs))
    pad = max_delay + cfg.fd_taps + 1
    padded = np.pad(src, (pad, pad))

    speech = np.zeros((cfg.geometry.m, n))
    for s, w in enumerate(weights):
        support = np.flatnonzero(w)
        if support.size == 0:
            continue
        a, b = support[0], support[-1] + 1
        for m in range(cfg.geometry.m):
            start, taps = fractional_delay_filter(dist[s, m] / cfg.speed_of_sound * fs, cfg.fd_taps)
            lo = a - start - (cfg.fd_taps - 1) + pad
            chunk = np.convolve(padded[lo: b - start + pad], taps, mode="valid")
            speech[m, a:b] += w[a:b] * chunk / dist[s, m]

    rtf = np.stack([
        steering_rtf(pos, p, stft_cfg, cfg.speed_of_sound) for p in src_pos
    ])
    return speech, rtf, edges


def spherical_coherence(positions, freqs, c=SPEED_OF_SOUND):
    """``sin(2 pi f d_ij / c) / (2 pi f d_ij / c)`` for every mic pair; ``(F, M, M)``."""
    pos = np.asarray(positions, dtype=float)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    return np.sinc(2.0 * np.asarray(freqs)[:, None, None] * d[None] / c)


def synthesize_diffuse_noise(geometry, duration, sample_rate=16000, seed=0,
                             c=SPEED_OF_SOUND, loading=1e-6, field="spherically_diffuse",
                             spectrum="speech", rng=None):
    """Noise with sinc coherence across the LMA and independent external channels.

    Independent white Gaussian signals are transformed with a full-length
    FFT; at every frequency the LMA spectra are mixed by the Cholesky factor
    of the (diagonally loaded) target coherence matrix.
    """
    n = int(round(duration * sample_rate))
    if n <= 0:
        raise ValueError("duration must be positive")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    white = rng.standard_normal((geometry.m, n))
    spec = np.fft.rfft(white, axis=-1)
    if field == "spherically_diffuse" and geometry.ma > 1:
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        gamma = spherical_coherence(geometry.lma_positions, freqs, c)
        gamma += loading * np.eye(geometry.ma)
        mix = linalg.hermitian_cholesky(gamma)
        spec[: geometry.ma] = np.einsum("fij,jf->if", mix, spec[: geometry.ma])
    out = np.fft.irfft(spec, n=n, axis=-1)
    if spectrum == "speech":
        out = sps.sosfilt(_speech_shaping(sample_rate), out, axis=-1)
    return out


def oracle_vad(reference_speech, cfg, threshold=1e-4):
    """Frames whose windowed speech energy exceeds ``threshold`` x the peak."""
    energy = frame_energy(analyze(reference_speech, cfg))[:, 0]
    peak = energy.max()
    if peak <= 0:
        return np.zeros(energy.shape, dtype=bool)
    return energy > threshold * peak


def mix_at_snr(speech, noise, target_db, reference_channel=0, cfg=None, vad_threshold=1e-4):
    """Scale the noise so the reference channel has ``target_db`` broadband SNR."""
    speech = np.atleast_2d(np.asarray(speech, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if speech.shape != noise.shape:
        raise ValueError(f"speech {speech.shape} and noise {noise.shape} differ in shape")
    es = np.sum(speech[reference_channel] ** 2)
    en = np.sum(noise[reference_channel] ** 2)
    if en <= 0:
        raise SilentSignal("noise has no energy in the reference channel")
    if es <= 0:
        raise SilentSignal("speech has no energy in the reference channel")
    scale = np.sqrt(es / (en * 10 ** (target_db / 10)))
    noise = noise * scale
    cfg = cfg or StftConfig()
    vad = oracle_vad(speech[reference_channel], cfg, vad_threshold)
    return LabeledRecording(speech, noise, speech + noise, vad, cfg.sample_rate, noise_scale=scale)


def simulate(cfg, stft_cfg=None):
    """Full scene: speech, diffuse noise, SNR-calibrated mixture and labels."""
    stft_cfg = stft_cfg or StftConfig.from_duration(cfg.sample_rate)
    speech, rtf, edges = synthesize_speech(cfg, stft_cfg)
    noise = synthesize_diffuse_noise(
        cfg.geometry, cfg.duration, cfg.sample_rate, cfg.seed, cfg.speed_of_sound,
        cfg.coherence_loading, cfg.noise_field, cfg.noise_spectrum,
    )
    rec = mix_at_snr(speech, noise, cfg.target_input_snr_lma_db, 0, stft_cfg, cfg.vad_threshold)
    rec.oracle_rtf = rtf
    rec.segment_times = edges
    rec.metadata = {
        "seed": cfg.seed,
        "lma_positions": cfg.geometry.lma_positions.tolist(),
        "external_positions": cfg.geometry.external_positions.tolist(),
        "side_references": list(cfg.geometry.side_references),
        "trajectory_times": cfg.trajectory.times.tolist(),
        "trajectory_positions": cfg.trajectory.positions.tolist(),
        "duration": cfg.duration,
        "sample_rate": cfg.sample_rate,
        "target_input_snr_lma_db": cfg.target_input_snr_lma_db,
        "speed_of_sound": cfg.speed_of_sound,
        "noise_field": cfg.noise_field,
    }
    return rec


def binaural_geometry(ear_distance=0.16, mic_spacing=0.007, external_distance=2.3):
    """Two 2-mic hearing aids on a head at the origin plus two external mics.

    The externals sit at the left-front and right-front, ``external_distance``
    from the head centre.  References: left-front (0) and right-front (2).
    """
    x = ear_distance / 2
    y = mic_spacing / 2
    lma = [(-x, y, 0.0), (-x, -y, 0.0), (x, y, 0.0), (x, -y, 0.0)]
    e = external_distance / np.sqrt(2)
    ext = [(-e, e, 0.0), (e, e, 0.0)]
    return MicGeometry(lma, ext, side_references=(0, 2))


def default_scene(seed=0, duration=30.0, target_db=0.0, **kwargs):
    """Talker walking from near E1 to near E2 in front of the listener."""
    geom = binaural_geometry()
    start = (-1.45, 1.2, 0.0)
    stop = (1.45, 1.2, 0.0)
    traj = SourceTrajectory([0.0, duration], [start, stop])
    return SceneConfig(geom, traj, duration=duration, target_input_snr_lma_db=target_db,
                       seed=seed, **kwargs)
