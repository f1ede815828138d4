"""Command-line entry point: ``iatprint <subcommand> ...``.

Exit codes: 0 success, 1 I/O failure, 2 invalid input (parse, validation or
configuration errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ExperimentConfig, load_config
from .errors import ConfigError, EmptySplit, IatprintError
from .iat import IatWindow, read_manifest, write_manifest
from .model import load_model, model_forward
from .pcap import FilterModel
from .render import PlotStyle
from .train import ImageCache, TrainConfig, evaluate, label_map, to_input

log = logging.getLogger("iatprint")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def _emit(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _load_cfg(path, seed) -> ExperimentConfig:
    cfg = load_config(path)
    return cfg.with_seed(seed) if seed is not None else cfg


def _model_context(model_path, config_path=None):
    """Plot style and label names that belong with a trained model."""
    directory = os.path.dirname(os.path.abspath(model_path))
    cfg_path = config_path or os.path.join(directory, "config.json")
    style = load_config(cfg_path).plot_style if os.path.exists(cfg_path) else PlotStyle()
    labels = None
    summary_path = os.path.join(directory, "summary.json")
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            labels = json.load(fh).get("labels")
    return style, labels


def cmd_ingest(args) -> int:
    from .experiment import ingest_windows
    windows, stats, series = ingest_windows(args.pcap, args.filter, args.window_size)
    print(stats.summary_line(), file=sys.stderr)
    write_manifest(args.out, windows)
    if not windows:
        print("warning: no complete IAT windows; manifest is empty", file=sys.stderr)
    for device, s in series.items():
        n = sum(1 for w in windows if w.device == device)
        _emit(args, f"{device}\tiats={s.iats.size}\tdropped={s.dropped_nonpositive}\twindows={n}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .experiment import run_experiment
    cfg = _load_cfg(args.config, args.seed)
    summary = run_experiment(cfg, args.out)
    _emit(args, f"best_val_accuracy={summary['best_val_accuracy']:.4f} (epoch {summary['best_epoch']}) "
                f"final_val_accuracy={summary['final_val_accuracy']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params = load_model(args.model)
    windows = read_manifest(args.manifest)
    if not windows:
        raise EmptySplit(f"manifest {args.manifest} has no windows")
    style, labels = _model_context(args.model, args.config)
    labels = labels or label_map(windows)
    cfg = TrainConfig(plot_style=style, loss_kind=params.loss_kind)
    res = evaluate(params, windows, cfg, labels)
    _emit(args, f"accuracy={res.accuracy:.4f} mean_loss={res.mean_loss:.6f} n={len(windows)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    params = load_model(args.model)
    with open(args.window) as fh:
        obj = json.load(fh)
    if isinstance(obj, list):
        obj = {"device": "00:00:00:00:00:00", "values": obj}
    window = IatWindow.from_json(obj)
    style, labels = _model_context(args.model, args.config)
    prob, _ = model_forward(to_input(ImageCache(style).get(window)), params, "eval")
    cls = int(prob >= 0.5)
    name = labels[cls] if labels else str(cls)
    print(f"{name}\t{prob:.6f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import generate_pcap
    cfg = _load_cfg(args.config, args.seed)
    if cfg.simulate is None:
        raise ConfigError("config has no 'simulate' section")
    packets = args.packets or cfg.simulate.packets_per_device
    sampled = generate_pcap(cfg.simulate.profiles, packets, args.out)
    for mac, iats in sampled.items():
        _emit(args, f"{mac}\tpackets={iats.size}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .experiment import render_windows
    style = load_config(args.config).plot_style if args.config else PlotStyle()
    windows = read_manifest(args.manifest)
    n = render_windows(windows, style, args.out_dir)
    _emit(args, f"rendered {n} images into {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override every seed in the config")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress progress output")
    parser = argparse.ArgumentParser(prog="iatprint", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="pcap -> IAT window manifest")
    p.add_argument("--pcap", required=True)
    p.add_argument("--filter", required=True, choices=[m.value for m in FilterModel])
    p.add_argument("--out", required=True)
    p.add_argument("--window-size", type=int, default=100)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="experiment directory (default: paths.out_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="classify one window")
    p.add_argument("--model", required=True)
    p.add_argument("--window", required=True, help="JSON window object or bare array of IATs")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic capture")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--packets", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("render", parents=[common], help="manifest -> PPM fingerprint images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # --seed/--quiet may appear before or after the subcommand; absent means unset
    args.seed = getattr(args, "seed", None)
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (IatprintError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
