"""WAV and metadata I/O for recordings and experiment outputs."""

import csv
import json
import os

import numpy as np
from scipy.io import wavfile

from .scene import LabeledRecording

__all__ = ["write_wav", "read_wav", "write_recording", "read_recording", "write_rows", "read_rows"]

FLOAT_FMT = "{:.10g}"


def write_wav(path, data, sample_rate, subtype="float32"):
    """Write ``(channels, samples)`` (or 1-D) audio as little-endian WAV.

    ``subtype`` is ``"float32"`` (IEEE float) or ``"pcm16"``; PCM input is
    clipped to [-1, 1).
    """
    data = np.atleast_2d(np.asarray(data, dtype=float)).T
    if subtype == "float32":
        out = data.astype("<f4")
    elif subtype == "pcm16":
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    else:
        raise ValueError(f"unsupported WAV subtype {subtype!r}")
    wavfile.write(path, int(sample_rate), out if out.shape[1] > 1 else out[:, 0])


def read_wav(path):
    """Return ``(data, sample_rate)`` with ``data`` as float ``(channels, samples)``."""
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(float) / 2147483648.0
    else:
        data = data.astype(float)
    return np.atleast_2d(data.T), fs


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([FLOAT_FMT.format(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_recording(rec, out_dir):
    """Store speech/noise/mixture WAVs, ``scene.json`` and ``oracle_rtf.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    for name in ("speech", "noise", "mixture"):
        write_wav(os.path.join(out_dir, f"{name}.wav"), getattr(rec, name), rec.sample_rate)
    meta = dict(rec.metadata)
    meta["noise_scale"] = float(rec.noise_scale)
    meta["vad"] = [int(v) for v in rec.vad]
    if rec.segment_times is not None:
        meta["segment_times"] = [float(t) for t in rec.segment_times]
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    if rec.oracle_rtf is not None:
        s, k, m = np.indices(rec.oracle_rtf.shape).reshape(3, -1)
        vals = rec.oracle_rtf.reshape(-1)
        write_rows(
            os.path.join(out_dir, "oracle_rtf.csv"),
            ["segment", "bin", "mic", "real", "imag"],
            zip(s, k, m, vals.real, vals.imag),
        )


def read_recording(out_dir):
    """Inverse of :func:`write_recording` (audio comes back in float32 precision)."""
    speech, fs = read_wav(os.path.join(out_dir, "speech.wav"))
    noise, _ = read_wav(os.path.join(out_dir, "noise.wav"))
    with open(os.path.join(out_dir, "scene.json")) as fh:
        meta = json.load(fh)
    rec = LabeledRecording(speech, noise, speech + noise, np.array(meta.pop("vad"), dtype=bool),
                           fs, noise_scale=meta.pop("noise_scale", 1.0))
    seg = meta.pop("segment_times", None)
    path = os.path.join(out_dir, "oracle_rtf.csv")
    if seg is not None and os.path.exists(path):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        n_seg, n_bins, n_mic = (int(data[:, i].max()) + 1 for i in range(3))
        rtf = (data[:, 3] + 1j * data[:, 4]).reshape(n_seg, n_bins, n_mic)
        rec.oracle_rtf = rtf
        rec.segment_times = np.array(seg)
    rec.metadata = meta
    return rec
