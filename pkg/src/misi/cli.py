"""Command-line surface: dataset synthesis, inversion, measured-data
conversion, and the forward-solver validation gate.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure,
3 I/O failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io as misi_io
from .forward import SolverError, add_noise, mie_cylinder, \
    synthesize_measurements
from .metrics import TruthProfile
from .network import NetConfig, save_checkpoint
from .scene import build_fresnel_like_scene, rasterize_phantom
from .trainer import TrainConfig, monte_carlo, run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_USAGE)


def _build_parser():
    parser = _Parser(prog="misi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize a dataset from a config")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--snr", action="append", type=float, default=[],
                       help="SNR in dB; repeat for multiple noisy files")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--forward-grid", type=int, required=True)
    synth.add_argument("--tol", type=float, default=1e-6)
    synth.add_argument("--force", action="store_true")
    synth.add_argument("--allow-inverse-crime", action="store_true")

    invert = sub.add_parser("invert", help="reconstruct maps from a dataset")
    invert.add_argument("--data", required=True)
    invert.add_argument("--mode", choices=["alt-cc", "alt", "simul-cc"],
                        default="alt-cc")
    invert.add_argument("--strategy", choices=["hop", "simul"], default="hop")
    invert.add_argument("--epochs", type=int, default=1000)
    invert.add_argument("--stage-split", default=None,
                        help="comma-separated stage percentages")
    invert.add_argument("--seed", type=int, default=0)
    invert.add_argument("--runs", type=int, default=1)
    invert.add_argument("--truth", default=None,
                        help="phantom config enabling PSNR logging")
    invert.add_argument("--net-cfg", default=None)
    invert.add_argument("--out", required=True)
    invert.add_argument("--psnr-every", type=int, default=10)
    invert.add_argument("--pad-factor", type=int, default=4)
    invert.add_argument("--force-beta-zero", action="store_true")

    conv = sub.add_parser("convert-measured",
                          help="convert a measured-field table to a dataset")
    conv.add_argument("--input", required=True)
    conv.add_argument("--geometry", required=True)
    conv.add_argument("--stride", type=int, default=1)
    conv.add_argument("--out", required=True)
    conv.add_argument("--force", action="store_true")

    mie = sub.add_parser("mie-check",
                         help="forward solver vs analytic cylinder series")
    mie.add_argument("--eps-r", type=float, default=2.0)
    mie.add_argument("--radius", type=float, default=0.25)
    mie.add_argument("--freq", type=float, default=0.3e9)
    mie.add_argument("--grid", type=int, default=128)
    mie.add_argument("--tol", type=float, default=0.02)
    return parser


def _refuse_overwrite(path, force):
    if os.path.exists(path) and not force:
        raise CliError(f"refusing to overwrite {path} (use --force)", EXIT_IO)


def _cmd_synth(args):
    scene, phantom = misi_io.load_experiment_config(args.config)
    mset = synthesize_measurements(
        scene, phantom, args.forward_grid, tol=args.tol,
        allow_inverse_crime=args.allow_inverse_crime)
    if not args.snr:
        _refuse_overwrite(args.out, args.force)
        misi_io.write_container(args.out, mset)
        print(f"wrote {args.out}")
        return EXIT_OK
    stem, ext = os.path.splitext(args.out)
    for i, snr in enumerate(args.snr):
        path = args.out if len(args.snr) == 1 \
            else f"{stem}_snr{snr:g}dB{ext}"
        _refuse_overwrite(path, args.force)
        noisy = add_noise(mset, snr, seed=args.seed + i)
        misi_io.write_container(path, noisy)
        print(f"wrote {path}")
    return EXIT_OK


def _parse_split(text):
    if text is None:
        return None
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise CliError(f"bad --stage-split {text!r}: {exc}", EXIT_USAGE)


def _export_run(out_dir, train_run, n_freq, scene):
    os.makedirs(out_dir, exist_ok=True)
    misi_io.write_epoch_log(os.path.join(out_dir, "epochs.csv"), train_run,
                            n_freq)
    misi_io.write_grid_csv(os.path.join(out_dir, "eps.csv"),
                           train_run.final_eps)
    misi_io.write_grid_csv(os.path.join(out_dir, "sigma.csv"),
                           train_run.final_sigma)
    misi_io.write_pgm(os.path.join(out_dir, "eps.pgm"), train_run.final_eps)
    misi_io.write_pgm(os.path.join(out_dir, "sigma.pgm"),
                      train_run.final_sigma)
    save_checkpoint(train_run.net, os.path.join(out_dir, "net.ckpt"))


def _cmd_invert(args):
    mset = misi_io.read_container(args.data)
    scene = mset.scene
    if args.strategy == "simul" and args.stage_split is not None:
        print("warning: --stage-split is ignored with --strategy simul",
              file=sys.stderr)
    net_cfg = misi_io.load_net_config(args.net_cfg) if args.net_cfg \
        else NetConfig()
    cfg = TrainConfig(
        mode=args.mode.replace("-", "_"), strategy=args.strategy,
        epochs=args.epochs, seed=args.seed, stage_split=_parse_split(
            None if args.strategy == "simul" else args.stage_split),
        net_cfg=net_cfg, psnr_every=args.psnr_every,
        pad_factor=args.pad_factor, force_beta_zero=args.force_beta_zero)
    truth = None
    if args.truth:
        phantom = misi_io.load_phantom_config(args.truth)
        eps_true, sigma_true = rasterize_phantom(phantom, scene)
        truth = TruthProfile(eps_true=eps_true, sigma_true=sigma_true)

    os.makedirs(args.out, exist_ok=True)
    if args.runs == 1:
        result = run(mset, scene, cfg, truth=truth)
        _export_run(os.path.join(args.out, "run_000"), result, scene.n_freq,
                    scene)
        summary = {"mode": cfg.mode, "strategy": cfg.strategy,
                   "epochs": cfg.epochs, "seeds": [cfg.seed]}
    else:
        mc = monte_carlo(mset, scene, cfg, args.runs, args.seed, truth=truth)
        for i, train_run in enumerate(mc.runs):
            _export_run(os.path.join(args.out, f"run_{i:03d}"), train_run,
                        scene.n_freq, scene)
        summary = {"mode": cfg.mode, "strategy": cfg.strategy,
                   "epochs": cfg.epochs, "seeds": mc.seeds,
                   "failures": mc.failures, "median_seed": mc.median_seed}
        if mc.stats is not None:
            misi_io.write_psnr_curve(os.path.join(args.out, "psnr_curve.csv"),
                                     mc.stats)
            misi_io.write_final_psnr(os.path.join(args.out, "final_psnr.csv"),
                                     mc.stats, mc.seeds)
            summary["final_psnr_five_number"] = list(mc.stats.five_number)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"wrote results to {args.out}")
    return EXIT_OK


def _cmd_convert(args):
    geom = misi_io.load_geometry_config(args.geometry)
    mset = misi_io.convert_measured(args.input, geom, args.stride)
    _refuse_overwrite(args.out, args.force)
    misi_io.write_container(args.out, mset)
    print(f"wrote {args.out} ({mset.scene.n_tx} tx x {mset.scene.n_rx} rx)")
    return EXIT_OK


def _cmd_mie_check(args):
    scene = build_fresnel_like_scene(
        n_tx=4, blind_deg=0.0, rx_step_deg=10.0, radius=3.0, doi_half=0.5,
        n_grid=max(2, args.grid // 8), freqs=[args.freq])
    from .scene import Phantom, Shape
    phantom = Phantom(shapes=(Shape("disk", (0.0, 0.0), args.eps_r,
                                    radius=args.radius),))
    mset = synthesize_measurements(scene, phantom, args.grid)
    num = 0.0
    den = 0.0
    for p in range(scene.n_tx):
        ref = mie_cylinder(args.eps_r, args.radius, args.freq,
                           scene.rx_positions[p], scene.tx_positions[p])
        num += float(np.sum(np.abs(mset.data[0, p] - ref) ** 2))
        den += float(np.sum(np.abs(ref) ** 2))
    err = math.sqrt(num / den) if den > 0 else 0.0
    print(f"relative L2 error vs analytic series: {err:.4%} "
          f"(gate {args.tol:.2%})")
    return EXIT_OK if err <= args.tol else EXIT_NUMERIC


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"synth": _cmd_synth, "invert": _cmd_invert,
                   "convert-measured": _cmd_convert,
                   "mie-check": _cmd_mie_check}[args.command]
        return handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except misi_io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
