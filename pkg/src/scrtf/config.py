"""INI-style experiment configuration with dotted section names.

Sections and keys::

    [experiment]        estimators, covariance_mode, average_sides,
                        freq_average, bias_frame_step, bin_chunk, output_dir
    [smoothing]         tau_y, tau_x, tau_n, mapping
    [stft]              frame_length, hop, window
    [scene]             seed, duration, sample_rate, target_input_snr_lma_db,
                        speed_of_sound, noise_field, noise_spectrum,
                        segment_duration, fd_taps, coherence_loading,
                        vad_threshold
    [scene.geometry]    lma_positions, external_positions, side_references
    [scene.trajectory]  times, positions

Positions are written as ``x y z`` triples separated by ``;``.  Anything left
out takes the value printed by :func:`dump_config` on the defaults.  When
``scene.duration`` is changed and no trajectory is given, the default walk
is stretched to the new duration.
"""

import configparser
import io

import numpy as np

from .errors import ConfigError
from .experiment import ExperimentConfig, parse_estimators
from .scene import MicGeometry, SceneConfig, SourceTrajectory, default_scene
from .stft import StftConfig

__all__ = ["load_config", "parse_config", "dump_config", "default_config"]

_SCENE_KEYS = {
    "seed": int,
    "duration": float,
    "sample_rate": int,
    "target_input_snr_lma_db": float,
    "speed_of_sound": float,
    "noise_field": str,
    "noise_spectrum": str,
    "segment_duration": float,
    "fd_taps": int,
    "coherence_loading": float,
    "vad_threshold": float,
}
_STFT_KEYS = {"frame_length": int, "hop": int, "window": str}
_EXPERIMENT_KEYS = {
    "estimators": str,
    "covariance_mode": str,
    "average_sides": bool,
    "freq_average": str,
    "bias_frame_step": int,
    "bin_chunk": int,
    "output_dir": str,
}
_SMOOTHING_KEYS = {"tau_y": float, "tau_x": float, "tau_n": float, "mapping": str}
_SECTIONS = {
    "experiment": _EXPERIMENT_KEYS,
    "smoothing": _SMOOTHING_KEYS,
    "stft": _STFT_KEYS,
    "scene": _SCENE_KEYS,
    "scene.geometry": {"lma_positions": str, "external_positions": str, "side_references": str},
    "scene.trajectory": {"times": str, "positions": str},
}


def default_config():
    return ExperimentConfig()


def _points(text):
    rows = [r.split() for r in text.replace(",", " ").split(";") if r.strip()]
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("expected 'x y z' triples separated by ';'")
    return arr


def _numbers(text, kind=float):
    return [kind(v) for v in text.replace(",", " ").split()]


def _fmt_points(arr):
    return "; ".join(" ".join(repr(float(v)) for v in row) for row in np.asarray(arr))


def _get(parser, section, key, kind):
    try:
        if kind is bool:
            return parser.getboolean(section, key)
        if kind is int:
            return parser.getint(section, key)
        if kind is float:
            return parser.getfloat(section, key)
        return parser.get(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _read_section(parser, section):
    keys = _SECTIONS[section]
    if not parser.has_section(section):
        return {}
    out = {}
    for key in parser.options(section):
        if key not in keys:
            raise ConfigError(f"unknown key '{key}' in [{section}]; expected one of {sorted(keys)}")
        out[key] = _get(parser, section, key, keys[key])
    return out


def parse_config(text, seed=None, output_dir=None, estimators=None):
    """Build an :class:`ExperimentConfig` from INI text plus CLI overrides.

    Raises
    ------
    ConfigError
        For unknown sections or keys, unparsable values and invalid settings.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(_SECTIONS)}")

    exp = _read_section(parser, "experiment")
    smooth = _read_section(parser, "smoothing")
    stft_kw = _read_section(parser, "stft")
    scene_kw = _read_section(parser, "scene")
    geom_kw = _read_section(parser, "scene.geometry")
    traj_kw = _read_section(parser, "scene.trajectory")
    if seed is not None:
        scene_kw["seed"] = int(seed)
    if output_dir is not None:
        exp["output_dir"] = output_dir
    if estimators is not None:
        exp["estimators"] = estimators

    try:
        base = default_scene(duration=scene_kw.get("duration", 30.0))
        geom = base.geometry
        if geom_kw:
            geom = MicGeometry(
                _points(geom_kw["lma_positions"]) if "lma_positions" in geom_kw else geom.lma_positions,
                _points(geom_kw["external_positions"]) if "external_positions" in geom_kw
                else geom.external_positions,
                tuple(_numbers(geom_kw["side_references"], int)) if "side_references" in geom_kw
                else geom.side_references,
            )
        traj = base.trajectory
        if traj_kw:
            if set(traj_kw) != {"times", "positions"}:
                raise ConfigError("[scene.trajectory] needs both 'times' and 'positions'")
            traj = SourceTrajectory(_numbers(traj_kw["times"]), _points(traj_kw["positions"]))
        scene = SceneConfig(geom, traj, **scene_kw)
        stft = StftConfig(sample_rate=scene.sample_rate, **stft_kw)
        if "mapping" in smooth:
            smooth["smoothing_mapping"] = smooth.pop("mapping")
        if "estimators" in exp:
            exp["estimators"] = parse_estimators(exp["estimators"], geom.me)
        return ExperimentConfig(scene=scene, stft=stft, **smooth, **exp)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, **overrides):
    """Read ``path`` (or start from defaults when None) and apply overrides."""
    text = ""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, **overrides)


def dump_config(cfg=None):
    """INI text that reproduces ``cfg`` (the defaults when None)."""
    cfg = cfg or default_config()
    sc = cfg.scene
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {
        "estimators": ",".join(cfg.estimators),
        "covariance_mode": cfg.covariance_mode,
        "average_sides": str(cfg.average_sides).lower(),
        "freq_average": cfg.freq_average,
        "bias_frame_step": str(cfg.bias_frame_step),
        "bin_chunk": str(cfg.bin_chunk),
        "output_dir": cfg.output_dir or "out",
    }
    parser["smoothing"] = {
        "tau_y": repr(cfg.tau_y),
        "tau_x": repr(cfg.tau_x),
        "tau_n": repr(cfg.tau_n),
        "mapping": cfg.smoothing_mapping,
    }
    parser["stft"] = {
        "frame_length": str(cfg.stft.frame_length),
        "hop": str(cfg.stft.hop),
        "window": cfg.stft.window,
    }
    parser["scene"] = {k: repr(getattr(sc, k)) if kind is float else str(getattr(sc, k))
                       for k, kind in _SCENE_KEYS.items()}
    parser["scene.geometry"] = {
        "lma_positions": _fmt_points(sc.geometry.lma_positions),
        "external_positions": _fmt_points(sc.geometry.external_positions),
        "side_references": ", ".join(str(i) for i in sc.geometry.side_references),
    }
    parser["scene.trajectory"] = {
        "times": ", ".join(repr(float(t)) for t in sc.trajectory.times),
        "positions": _fmt_points(sc.trajectory.positions),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

