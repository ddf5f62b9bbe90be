"""Command-line driver.

::

    scrtf simulate [--config F] [--seed N] --out DIR
    scrtf run      [--config F] [--seed N] [--out DIR] [--estimators sc1,sc2,gevd,model]
                   [--scene DIR]
    scrtf verify   [--seed N] [--instances N]
    scrtf report   --out DIR
    scrtf --dump-defaults

Exit codes: 0 success, 1 identity-battery failure, 2 configuration or I/O
error.
"""

import argparse
import os
import sys

import numpy as np

from .config import dump_config, load_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _common(p, out_required=False):
    p.add_argument("--config", help="INI config file (see --dump-defaults)")
    p.add_argument("--seed", type=int, help="override scene.seed")
    p.add_argument("--out", required=out_required, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scrtf",
        description="RTF estimation with external microphones: simulation, beamforming, checks.",
    )
    parser.add_argument("--dump-defaults", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="synthesize a labeled scene recording")
    _common(p, out_required=True)

    p = sub.add_parser("run", help="run the estimators and write weights/snr/bias CSVs")
    _common(p)
    p.add_argument("--estimators", help="comma-separated list, e.g. sc1,sc2,gevd,model")
    p.add_argument("--scene", help="use a recording written by 'simulate' instead of synthesizing")

    p = sub.add_parser("verify", help="run the constructed-covariance identity battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=1000)

    p = sub.add_parser("report", help="summarize the CSVs of a finished run")
    p.add_argument("--out", required=True, help="directory written by 'run'")
    return parser


def cmd_simulate(args):
    from .io import write_recording
    from .scene import simulate

    cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
    rec = simulate(cfg.scene, cfg.stft)
    write_recording(rec, args.out)
    print(f"wrote {rec.speech.shape[0]}-channel, {rec.speech.shape[1] / rec.sample_rate:.1f} s "
          f"scene (seed {cfg.seed}) to {args.out}")
    return EXIT_OK


def cmd_run(args):
    from .experiment import run_experiment
    from .io import read_recording

    cfg = load_config(args.config, seed=args.seed, output_dir=args.out, estimators=args.estimators)
    rec = None
    if args.scene:
        if not os.path.isdir(args.scene):
            raise ConfigError(f"scene directory {args.scene} does not exist")
        rec = read_recording(args.scene)
        if rec.speech.shape[0] != cfg.scene.geometry.m:
            raise ConfigError(f"scene has {rec.speech.shape[0]} channels, config geometry "
                              f"{cfg.scene.geometry.m}")
    report = run_experiment(cfg, recording=rec)
    for name in cfg.estimators:
        print(f"{name:8s} delta SNR {report.delta_snr_db[name]:7.3f} dB")
    if cfg.output_dir:
        print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def cmd_verify(args):
    from .identities import verify_identities

    report = verify_identities(seed=args.seed, n_instances=args.instances)
    for line in report.lines():
        print(line)
    print("all identities hold" if report.passed else "identity battery FAILED")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_report(args):
    from .io import read_rows

    path = os.path.join(args.out, "snr.csv")
    if not os.path.exists(path):
        raise ConfigError(f"{path} not found; run 'scrtf run --out {args.out}' first")
    print("estimator  side   snr_in  snr_out  delta (dB)")
    for row in read_rows(path):
        s_in = row["snr_in_db"] and f"{float(row['snr_in_db']):7.2f}"
        s_out = row["snr_out_db"] and f"{float(row['snr_out_db']):7.2f}"
        print(f"{row['estimator']:10s} {row['side']:6s} {s_in or '':>7s}  {s_out or '':>7s}  "
              f"{float(row['delta_snr_db']):7.3f}")
    path = os.path.join(args.out, "weights.csv")
    if os.path.exists(path):
        rows = read_rows(path)
        if rows:
            keys = [k for k in rows[0] if k.startswith("re_alpha1_")]
            n = max(1, len(rows) // 10)
            for key in keys:
                vals = np.array([float(r[key]) for r in rows])
                print(f"{key}: first 10% {vals[:n].mean():.3f}, last 10% {vals[-n:].mean():.3f}")
    path = os.path.join(args.out, "bias.csv")
    if os.path.exists(path):
        rows = read_rows(path)
        for name in sorted({r["estimator"] for r in rows}):
            sel = [r for r in rows if r["estimator"] == name]
            pred = np.array([float(r["predicted_factor"]) for r in sel])
            meas = np.array([float(r["abs_measured_ratio"]) for r in sel])
            ok = np.isfinite(pred) & np.isfinite(meas)
            if ok.any():
                print(f"bias {name}: median predicted {np.median(pred[ok]):.3f}, "
                      f"median |measured| {np.median(meas[ok]):.3f} over {int(ok.sum())} cells")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "verify": cmd_verify, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.dump_defaults:
            sys.stdout.write(dump_config())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
