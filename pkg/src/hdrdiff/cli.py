"""Command-line surface: synth / train / sample / eval.

Exit codes: 0 success, 1 usage error (bad flags, missing input paths),
2 runtime error (corrupt files, divergence, internal failures).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datasets, metrics, swne, trainer as trainer_mod
from .config import ConfigError, load_config
from .model import HdrDiffusionModel
from .tensorio import read_tensors, write_tensors
from .tonemap import HdrImage

__all__ = ["main", "entry", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the CLI contract wants 1
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdrdiff",
                     description="Conditional-diffusion HDR deghosting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic multi-exposure scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--motion", type=int, default=4, help="max frame shift in pixels")
    p.add_argument("--sat-frac", type=float, default=0.15,
                   help="minimum saturated fraction of the high-exposure frame")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="train a model on a scene directory")
    p.add_argument("--config", required=True, help="run config file (key = value lines)")
    p.add_argument("--data", required=True, help="dataset directory of scene subdirs")
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")

    p = sub.add_parser("sample", help="reconstruct an HDR image from a scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="scene directory")
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--cell", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output HDR file (.hdrf)")

    p = sub.add_parser("eval", help="PSNR/SSIM of a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mu", type=float, default=5000.0)
    p.add_argument("--kv", action="store_true", help="also print machine-readable key=value line")
    return parser


def _require_file(path, what) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        record = datasets.synth_scene(args.seed + i, size=args.size,
                                      motion_px=args.motion, sat_frac=args.sat_frac)
        datasets.save_scene(record, out / f"scene_{i:03d}")
    print(f"wrote {args.count} scene(s) to {out}")
    return 0


def _cmd_train(args) -> int:
    config_path = _require_file(args.config, "config file")
    _require_file(args.data, "dataset directory")
    try:
        run = load_config(config_path)
    except ConfigError as exc:
        raise UsageError(f"{config_path}: {exc}") from exc
    dataset = datasets.load_dataset(args.data, gamma=run.gamma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    model = HdrDiffusionModel(run.model_config(), seed=run.seed)
    schedule = run.schedule()
    tr = trainer_mod.Trainer(model, schedule, run.train_config(), dataset,
                             log_file=out / "metrics.log")
    checkpoint = out / "checkpoint.hdrf"
    tr.run(log_interval=run.log_interval,
           checkpoint_interval=run.checkpoint_interval,
           checkpoint_path=checkpoint, quiet=False)
    tr.save(checkpoint)
    print(f"checkpoint written to {checkpoint}")
    return 0


def _cmd_sample(args) -> int:
    checkpoint = _require_file(args.checkpoint, "checkpoint")
    scene_dir = _require_file(args.input, "input scene directory")
    model, store, tensors = trainer_mod.load_checkpoint(checkpoint)
    schedule = trainer_mod.schedule_from_checkpoint(tensors)
    mu = float(tensors["cfg/mu"])
    record = datasets.load_dataset_sample(scene_dir, gamma=float(tensors["cfg/gamma"]))
    hdr = swne.swne_sample(record.ldr, store, schedule, window=args.window,
                           cell=args.cell, steps=args.steps, seed=args.seed, mu=mu)
    write_tensors(args.out, {"hdr": hdr.data})
    print(f"wrote {args.out}")
    return 0


def _load_hdr(path) -> np.ndarray:
    tensors = read_tensors(_require_file(path, "HDR file"))
    return next(iter(tensors.values()))


def _cmd_eval(args) -> int:
    pred = HdrImage(_load_hdr(args.pred))
    gt = HdrImage(_load_hdr(args.gt))
    report = metrics.evaluate_pair(pred, gt, mu=args.mu)
    print(report.as_text())
    if args.kv:
        print(report.as_kv())
    return 0


_COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "sample": _cmd_sample, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
