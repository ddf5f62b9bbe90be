"""End-to-end experiment: scene -> STFT -> covariances -> RTF -> MVDR -> metrics.

Estimator names
---------------
``sc1`` .. ``scMe``   SC estimate from one external microphone
``gevd``              mSNR combination with GEVD weights (from Ry, Rn)
``model``             mSNR combination with normalised input SNRs (from Rx, Rn)
``oracle``            true free-field RTF of the current trajectory segment

The SNR improvement of every estimator is measured with the shadow filter on
the speech-active samples and, when the geometry declares several LMA
reference microphones (left/right hearing aid), averaged over them.
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import covariance, linalg, rtf
from .beamform import broadband_snr_db, mvdr_from_solved, vad_to_samples
from .covariance import DIAGONAL_LOADING, load_diagonal
from .errors import ConfigError
from .scene import LabeledRecording, SceneConfig, default_scene, simulate
from .stft import Spectrogram, StftConfig, analyze, synthesize

__all__ = ["ExperimentConfig", "ExperimentReport", "run_experiment", "parse_estimators"]

DEFAULT_ESTIMATORS = ("sc1", "sc2", "gevd", "model")


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=default_scene)
    stft: StftConfig = field(default_factory=StftConfig)
    tau_y: float = 0.25
    tau_x: float = 0.25
    tau_n: float = 1.0
    smoothing_mapping: str = "exponential"
    estimators: tuple = DEFAULT_ESTIMATORS
    covariance_mode: str = "oracle"
    average_sides: bool = True
    freq_average: str = "energy"
    bias_frame_step: int = 25
    bin_chunk: int = 16
    output_dir: str = None

    def __post_init__(self):
        self.estimators = parse_estimators(self.estimators, self.scene.geometry.me)
        if self.covariance_mode not in ("oracle", "blind"):
            raise ConfigError(f"covariance_mode must be 'oracle' or 'blind', not {self.covariance_mode!r}")
        if self.freq_average not in ("energy", "linear"):
            raise ConfigError(f"freq_average must be 'energy' or 'linear', not {self.freq_average!r}")
        if self.stft.sample_rate != self.scene.sample_rate:
            raise ConfigError("STFT and scene sample rates differ")
        if self.bias_frame_step < 0 or self.bin_chunk < 1:
            raise ConfigError("bias_frame_step must be >= 0 and bin_chunk positive")

    @property
    def seed(self):
        return self.scene.seed

    def with_seed(self, seed):
        return replace(self, scene=replace(self.scene, seed=seed))


def parse_estimators(spec, n_external):
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    names = [s.strip().lower() for s in names if s.strip()]
    if not names:
        raise ConfigError("at least one estimator is required")
    allowed = {f"sc{j}" for j in range(1, n_external + 1)} | {"gevd", "model", "oracle"}
    bad = [s for s in names if s not in allowed]
    if bad:
        raise ConfigError(f"unknown estimator(s) {bad}; choose from {sorted(allowed)}")
    return tuple(dict.fromkeys(names))


@dataclass
class ExperimentReport:
    """Results of :func:`run_experiment`.

    Attributes
    ----------
    delta_snr_db : dict
        Estimator -> SNR improvement in dB, averaged over reference sides.
    per_side : dict
        Estimator -> list of ``(reference, snr_in_db, snr_out_db)``.
    frame_times : (frames,) frame-centre times in seconds
    frame_valid : (frames,) frames with at least one usable bin
    snr_e_db : (frames, Me) frequency-averaged external input SNR
    alpha : dict
        ``"gevd"``/``"model"`` -> (frames, Me) frequency-averaged weights.
    fallbacks : dict
        Estimator -> number of (frame, bin) cells that fell back.
    bias_rows : list of tuples for ``bias.csv``
    """

    delta_snr_db: dict
    per_side: dict
    frame_times: np.ndarray
    frame_valid: np.ndarray
    snr_e_db: np.ndarray
    alpha: dict
    fallbacks: dict
    bias_rows: list
    recording: LabeledRecording = None
    enhanced: dict = field(default_factory=dict)


def _weights_for(name, h_mat, ry, rn_inv_h, snr):
    if name == "gevd":
        return rtf.gevd_weights(h_mat, ry, None, rn_inv_h=rn_inv_h)
    if name == "model":
        return rtf.model_weights(snr)
    return None


def _process_side(y, x, n, vad, true_h, cfg, n_lma, n_ext, details):
    """Beamform one reference choice; channel 0 of the inputs is the reference.

    Returns ``{estimator: (zx, zn)}`` single-channel output spectra.  When
    ``details`` is true also returns frequency-averaged weights, input SNRs
    and bias-table rows.
    """
    n_frames, n_bins, m = y.shape
    hop = cfg.stft.hop_duration
    lam = [covariance.smoothing_factor(t, hop, cfg.smoothing_mapping)
           for t in (cfg.tau_y, cfg.tau_x, cfg.tau_n)]
    warmup = 2 * m
    out = {name: (np.zeros((n_frames, n_bins), complex), np.zeros((n_frames, n_bins), complex))
           for name in cfg.estimators}
    e_ref = np.zeros(m, complex)
    e_ref[0] = 1.0
    # placeholder estimate matrix for unusable bins: distinct columns keep B definite
    h_dummy = np.zeros((m, n_ext), complex)
    h_dummy[0] = 1.0
    h_dummy[n_lma + np.arange(n_ext), np.arange(n_ext)] = 1.0

    acc = {
        "den": np.zeros(n_frames),
        "snr": np.zeros((n_frames, n_ext)),
        "alpha": {k: np.zeros((n_frames, n_ext), complex) for k in ("gevd", "model")},
        "valid": np.zeros(n_frames, dtype=bool),
        "fallbacks": {name: 0 for name in cfg.estimators},
        "bias": [],
    }
    bias_frames = np.arange(0, n_frames, cfg.bias_frame_step or n_frames)
    wanted = set(cfg.estimators) | ({"gevd", "model"} if details else set())

    for k0 in range(0, n_bins, cfg.bin_chunk):
        sl = slice(k0, min(n_bins, k0 + cfg.bin_chunk))
        if cfg.covariance_mode == "oracle":
            ry, rx, rn, counts = covariance.track(
                y[:, sl], vad, x[:, sl], n[:, sl], *lam, normalize=True)
        else:
            ry, rx, rn, counts = covariance.track(y[:, sl], vad, None, None, *lam, normalize=True)
            # speech PSDs only (diagonal), from the noisy-minus-noise difference
            rx = np.zeros_like(ry)
            diag = np.real(np.diagonal(ry, axis1=-2, axis2=-1) - np.diagonal(rn, axis1=-2, axis2=-1))
            rx[..., np.arange(m), np.arange(m)] = np.maximum(diag, 0.0)
        ready = (counts[:, 0] > 0) & (counts[:, 2] >= warmup)
        rn_safe = np.where(ready[:, None, None, None], rn, np.eye(m))
        h_mat, valid = rtf.build_estimate_matrix(ry, n_ext, return_valid=True)
        valid &= ready[:, None]
        h_mat = np.where(valid[..., None, None], h_mat, h_dummy)
        snr = rtf.input_snr(rx, rn_safe, n_ext)

        # one factorisation of Rn per chunk; Rn^-1 (H a) = (Rn^-1 H) a covers
        # the single-channel and the combined estimates alike
        low = linalg.hermitian_cholesky(load_diagonal(rn_safe, DIAGONAL_LOADING))
        g_mat = linalg.solve_lower_h(low, linalg.solve_lower(low, h_mat))
        weights = {name: _weights_for(name, h_mat, ry, g_mat, snr)
                   for name in wanted if name in ("gevd", "model")}
        for name in cfg.estimators:
            if name.startswith("sc"):
                j = int(name[2:]) - 1
                h, g = h_mat[..., j], g_mat[..., j]
                ok = valid
            elif name == "oracle":
                h = np.broadcast_to(true_h[:, sl], h_mat.shape[:-1])
                g = linalg.solve_lower_h(low, linalg.solve_lower(low, h))
                ok = np.broadcast_to(ready[:, None], valid.shape)
            else:
                wv = weights[name]
                h = rtf.combine(h_mat, wv)
                g = (g_mat @ wv.alpha[..., None])[..., 0]
                ok = valid & ~wv.fallback
            acc["fallbacks"][name] += int(np.count_nonzero(ready[:, None] & ~ok))
            w = mvdr_from_solved(h, g)
            w = np.where(ok[..., None], w, e_ref)
            zx, zn = out[name]
            zx[:, sl] = np.sum(np.conj(w) * x[:, sl], axis=-1)
            zn[:, sl] = np.sum(np.conj(w) * n[:, sl], axis=-1)

        if not details:
            continue
        if cfg.freq_average == "energy":
            wt = np.real(rx[..., 0, 0])
        else:
            wt = np.ones(valid.shape)
        wt = np.where(valid, wt, 0.0)
        acc["den"] += wt.sum(axis=1)
        acc["snr"] += np.einsum("lk,lke->le", wt, snr)
        for key in ("gevd", "model"):
            acc["alpha"][key] += np.einsum("lk,lke->le", wt, weights[key].alpha)
        acc["valid"] |= valid.any(axis=1)
        if true_h is not None and cfg.bias_frame_step:
            _bias_rows(acc["bias"], bias_frames, sl, valid, h_mat, weights, snr,
                       true_h, n_lma, n_ext, cfg.estimators)

    if not details:
        return out, None
    den = acc["den"]
    good = den > 0
    safe = np.where(good, den, 1.0)[:, None]
    info = {
        "valid": acc["valid"] & good,
        "snr": np.where(good[:, None], acc["snr"] / safe, np.nan),
        "alpha": {k: np.where(good[:, None], v / safe, np.nan) for k, v in acc["alpha"].items()},
        "fallbacks": acc["fallbacks"],
        "bias": acc["bias"],
    }
    return out, info


def _bias_rows(rows, frames, sl, valid, h_mat, weights, snr, true_h, n_lma, n_ext, names):
    k_idx = np.arange(sl.start, sl.stop)
    for l in frames:
        for kk, k in enumerate(k_idx):
            if not valid[l, kk]:
                continue
            ratios_sc = rtf.measured_ratio(h_mat[l, kk].T, true_h[l, k], n_lma)  # (Me, Me)
            for name in names:
                if name.startswith("sc"):
                    j = int(name[2:]) - 1
                    r = ratios_sc[j, j]
                    if np.isfinite(r):
                        rows.append((name, l, k, j + 1, 1.0, 0.0,
                                     float(rtf.predicted_bias_sc(snr[l, kk, j])),
                                     float(abs(r)), float(np.angle(r))))
                elif name in ("gevd", "model"):
                    alpha = weights[name].alpha[l, kk]
                    h = h_mat[l, kk] @ alpha
                    ratio = rtf.measured_ratio(h, true_h[l, k], n_lma)
                    pred = float(rtf.predicted_bias_msnr(snr[l, kk]))
                    for j in range(n_ext):
                        if np.isfinite(ratio[j]):
                            rows.append((name, l, k, j + 1, float(alpha[j].real), float(alpha[j].imag),
                                         pred, float(abs(ratio[j])), float(np.angle(ratio[j]))))


def run_experiment(cfg, recording=None, write=True):
    """Run the full pipeline; writes CSV/WAV outputs when ``cfg.output_dir`` is set."""
    rec = recording if recording is not None else simulate(cfg.scene, cfg.stft)
    geom = cfg.scene.geometry
    n_lma, n_ext = geom.ma, geom.me
    y_all = analyze(rec.mixture, cfg.stft).data
    x_all = analyze(rec.speech, cfg.stft).data
    n_all = analyze(rec.noise, cfg.stft).data
    vad = np.asarray(rec.vad, dtype=bool)
    if vad.shape[0] != y_all.shape[0]:
        raise ConfigError("recording VAD does not match the STFT frame count")
    true_all = rec.oracle_rtf_for_frames(cfg.stft) if rec.oracle_rtf is not None else None
    if "oracle" in cfg.estimators and true_all is None:
        raise ConfigError("the oracle estimator needs a recording with oracle RTFs")

    refs = geom.side_references if cfg.average_sides else geom.side_references[:1]
    mask = vad_to_samples(vad, cfg.stft, rec.speech.shape[1])
    per_side = {name: [] for name in cfg.estimators}
    enhanced = {}
    info = None
    for i, ref in enumerate(refs):
        order = geom.channel_order(ref)
        true_h = None
        if true_all is not None:
            true_h = true_all[..., order] / true_all[..., [ref]]
        out, side_info = _process_side(
            y_all[..., order], x_all[..., order], n_all[..., order], vad, true_h,
            cfg, n_lma, n_ext, details=(i == 0),
        )
        if i == 0:
            info = side_info
        ref_x = synthesize(Spectrogram(x_all[..., [ref]], cfg.stft, rec.speech.shape[1]))[0]
        ref_n = synthesize(Spectrogram(n_all[..., [ref]], cfg.stft, rec.speech.shape[1]))[0]
        snr_in = broadband_snr_db(ref_x, ref_n, mask)
        for name, (zx, zn) in out.items():
            sx = synthesize(Spectrogram(zx[..., None], cfg.stft, rec.speech.shape[1]))[0]
            sn = synthesize(Spectrogram(zn[..., None], cfg.stft, rec.speech.shape[1]))[0]
            per_side[name].append((ref, snr_in, broadband_snr_db(sx, sn, mask)))
            if i == 0:
                enhanced[name] = sx + sn

    delta = {name: float(np.mean([o - s for _, s, o in rows])) for name, rows in per_side.items()}
    n_frames = y_all.shape[0]
    times = (np.arange(n_frames) * cfg.stft.hop + cfg.stft.frame_length / 2) / cfg.stft.sample_rate
    with np.errstate(divide="ignore"):
        snr_db = 10 * np.log10(info["snr"])
    report = ExperimentReport(
        delta_snr_db=delta,
        per_side=per_side,
        frame_times=times,
        frame_valid=info["valid"],
        snr_e_db=snr_db,
        alpha=info["alpha"],
        fallbacks=info["fallbacks"],
        bias_rows=info["bias"],
        recording=rec,
        enhanced=enhanced,
    )
    if write and cfg.output_dir:
        write_outputs(report, cfg)
    return report


def write_outputs(report, cfg):
    from .io import write_recording, write_rows, write_wav

    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    n_ext = cfg.scene.geometry.me
    fs = cfg.stft.sample_rate

    header = ["frame", "time_s"] + [f"snr_e{j + 1}_db" for j in range(n_ext)]
    for key in ("gevd", "model"):
        for j in range(n_ext):
            header += [f"re_alpha{j + 1}_{key}", f"im_alpha{j + 1}_{key}"]
    rows = []
    for l in np.flatnonzero(report.frame_valid):
        row = [int(l), float(report.frame_times[l])]
        row += [float(v) for v in report.snr_e_db[l]]
        for key in ("gevd", "model"):
            for j in range(n_ext):
                a = report.alpha[key][l, j]
                row += [float(a.real), float(a.imag)]
        rows.append(row)
    write_rows(os.path.join(out, "weights.csv"), header, rows)

    rows = []
    for name in cfg.estimators:
        for ref, s_in, s_out in report.per_side[name]:
            rows.append([name, f"ref{ref}", float(s_in), float(s_out), float(s_out - s_in)])
        rows.append([name, "mean", "", "", float(report.delta_snr_db[name])])
    write_rows(os.path.join(out, "snr.csv"),
               ["estimator", "side", "snr_in_db", "snr_out_db", "delta_snr_db"], rows)

    write_rows(os.path.join(out, "bias.csv"),
               ["estimator", "frame", "bin", "me", "re_alpha", "im_alpha", "predicted_factor",
                "abs_measured_ratio", "arg_measured_ratio"], report.bias_rows)

    write_rows(os.path.join(out, "fallbacks.csv"), ["estimator", "cells"],
               sorted(report.fallbacks.items()))
    for name, sig in report.enhanced.items():
        write_wav(os.path.join(out, f"enhanced_{name}.wav"), sig, fs)
    if report.recording is not None:
        write_recording(report.recording, os.path.join(out, "scene"))
