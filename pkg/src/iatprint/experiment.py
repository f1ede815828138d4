"""End-to-end experiment: windows -> images -> training -> artifacts on disk."""
from __future__ import annotations

import contextlib
import json
import logging
import os
import time

from . import __version__
from ._accel import backend_name
from .config import ExperimentConfig, check_inputs
from .errors import ConfigError, EmptySplit
from .iat import IatWindow, read_manifest, split_dataset, windows_from_records, write_manifest
from .model import save_model
from .pcap import apply_filter, read_pcap
from .render import FingerprintImage, write_ppm
from .simulate import benchmark_dataset
from .train import ImageCache, train, write_history, write_history_plots

log = logging.getLogger(__name__)

LOCK_NAME = ".lock"


@contextlib.contextmanager
def experiment_lock(directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, LOCK_NAME)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"experiment directory {directory} is locked by another run ({path})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(path)


def ingest_windows(pcap_path, filter_model: str, w: int = 100):
    """Parse, filter and window a capture: ``(windows, stats, series)``."""
    _, records, stats = read_pcap(pcap_path)
    kept = apply_filter(records, filter_model)
    windows, series = windows_from_records(kept, w, source=os.path.basename(str(pcap_path)),
                                           filter_model=filter_model)
    return windows, stats, series


def load_windows(cfg: ExperimentConfig) -> list[IatWindow]:
    if cfg.paths.manifest:
        return read_manifest(cfg.paths.manifest)
    if cfg.paths.pcap:
        if cfg.filter is None:
            raise ConfigError("a filter model is required when training from a pcap")
        windows, stats, _ = ingest_windows(cfg.paths.pcap, cfg.filter, cfg.window_size)
        log.info(stats.summary_line())
        return windows
    if cfg.simulate is not None:
        sim = cfg.simulate
        if len(sim.profiles) != 2:
            raise ConfigError("the simulated benchmark needs exactly two device profiles")
        return benchmark_dataset(sim.profiles[0], sim.profiles[1], tuple(sim.windows_per_device), cfg.window_size)
    raise ConfigError("config names no data source (paths.manifest, paths.pcap or simulate)")


def image_relpath(window: IatWindow) -> str:
    label = str(window.device).replace(":", "-")
    return os.path.join(label, f"{label}_{window.window_index}.ppm")


def render_windows(windows, style, out_dir, cache: ImageCache | None = None) -> int:
    cache = cache or ImageCache(style)
    for win in windows:
        path = os.path.join(out_dir, image_relpath(win))
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_ppm(path, FingerprintImage(cache.get(win)))
    return len(windows)


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Run the whole pipeline and write the experiment directory; returns the summary."""
    out_dir = out_dir or cfg.paths.out_dir
    check_inputs(cfg)
    timings = {}
    with experiment_lock(out_dir):
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            fh.write(cfg.dumps())

        t = time.perf_counter()
        windows = load_windows(cfg)
        if not windows:
            raise EmptySplit("no IAT windows available for training")
        write_manifest(os.path.join(out_dir, "manifest.jsonl"), windows)
        split = split_dataset(windows, cfg.train.split_ratio, cfg.seed)
        timings["load_s"] = time.perf_counter() - t

        t = time.perf_counter()
        cache = ImageCache(cfg.plot_style, cfg.paths.image_cache)
        render_windows(windows, cfg.plot_style, os.path.join(out_dir, "images"), cache)
        timings["render_s"] = time.perf_counter() - t

        t = time.perf_counter()
        result = train(split.train, split.validation, cfg.train)
        timings["train_s"] = time.perf_counter() - t

        save_model(result.params, os.path.join(out_dir, "model.iatm"))
        write_history(os.path.join(out_dir, "history.csv"), result.history)
        write_history_plots(out_dir, result.history)
        best = result.history[result.best_epoch - 1]
        summary = {
            "labels": result.labels,
            "seed": cfg.seed,
            "best_epoch": result.best_epoch,
            "best_val_accuracy": best.val_accuracy,
            "final_val_accuracy": result.history[-1].val_accuracy,
            "final_train_accuracy": result.history[-1].train_accuracy,
            "n_train": len(split.train),
            "n_validation": len(split.validation),
            "split_per_device": {k: list(v) for k, v in split.per_device.items()},
            "input_shape": [3, *cfg.train.input_hw],
            "backend": backend_name(),
            "version": __version__,
            "timings": timings,
        }
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary
