"""Training loop, evaluation, history and image caching."""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import model as M
from .augment import AugmentParams, augment
from .errors import ConfigError, EmptySplit, SingleClassTraining
from .iat import IatWindow
from .render import PlotStyle, rasterize, read_ppm, render_curve, write_ppm

log = logging.getLogger(__name__)

EVAL_CHUNK = 64


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 50
    learning_rate: float = 1e-3
    loss_kind: str = "bce"
    optimizer: str = "adam"
    momentum: float = 0.9
    dropout_p: float = 0.5
    split_ratio: float = 0.8
    seed: int = 0
    augment: AugmentParams = field(default_factory=AugmentParams)
    plot_style: PlotStyle = field(default_factory=PlotStyle)
    image_cache_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must lie strictly between 0 and 1")
        if self.loss_kind not in M.LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {M.LOSS_KINDS}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer must be 'adam' or 'sgd'")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    @property
    def input_hw(self) -> tuple[int, int]:
        return self.plot_style.height, self.plot_style.width


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


class EvalResult(NamedTuple):
    accuracy: float
    mean_loss: float
    probabilities: np.ndarray


class TrainResult(NamedTuple):
    params: M.ModelParams  # best validation accuracy, ties to the later epoch
    history: list
    best_epoch: int
    final_params: M.ModelParams
    labels: list


def make_batches(n_samples: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if n_samples < 1:
        raise EmptySplit("cannot batch zero samples")
    order = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, epoch]).permutation(n_samples)
    return [order[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def label_map(windows: Sequence[IatWindow]) -> list[str]:
    """Device strings in sorted order; position is the class index."""
    return sorted({str(w.device) for w in windows})


def labels_for(windows: Sequence[IatWindow], labels: Sequence[str]) -> np.ndarray:
    index = {name: i for i, name in enumerate(labels)}
    try:
        return np.array([index[str(w.device)] for w in windows], dtype=np.float64)
    except KeyError as exc:
        raise ConfigError(f"window from device {exc.args[0]} has no label") from None


def window_digest(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()[:24]


class ImageCache:
    """Rasterized base images keyed by (window digest, style digest), optionally on disk."""

    def __init__(self, style: PlotStyle, directory: str | None = None):
        self.style = style
        self.style_key = style.digest()
        self.directory = directory
        self._mem: dict[str, np.ndarray] = {}
        if directory:
            os.makedirs(directory, exist_ok=True)

    def get(self, window: IatWindow) -> np.ndarray:
        key = window_digest(window.values)
        hit = self._mem.get(key)
        if hit is not None:
            return hit
        path = os.path.join(self.directory, f"{key}_{self.style_key}.ppm") if self.directory else None
        if path and os.path.exists(path):
            pixels = read_ppm(path).pixels
        else:
            image = rasterize(window.values, self.style)
            pixels = image.pixels
            if path:
                write_ppm(path, image)
        self._mem[key] = pixels
        return pixels


def to_input(pixels: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) float64 in [0, 1]."""
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def evaluate(params: M.ModelParams, windows: Sequence[IatWindow], config: TrainConfig,
             labels: Sequence[str] | None = None, cache: ImageCache | None = None) -> EvalResult:
    """Eval-mode accuracy, mean loss and per-sample probabilities (predict class 1 iff p >= 0.5)."""
    if not windows:
        raise EmptySplit("evaluation set is empty")
    labels = list(labels) if labels is not None else label_map(windows)
    y = labels_for(windows, labels)
    cache = cache or ImageCache(config.plot_style, config.image_cache_dir)
    probs = np.empty(len(windows))
    for start in range(0, len(windows), EVAL_CHUNK):
        chunk = windows[start:start + EVAL_CHUNK]
        x = np.stack([to_input(cache.get(w)) for w in chunk])
        probs[start:start + len(chunk)], _ = M.model_forward(x, params, "eval")
    values, _ = M.loss(probs, y, params.loss_kind)
    accuracy = float(np.mean((probs >= 0.5) == (y == 1)))
    return EvalResult(accuracy, float(values.mean()), probs)


def train(train_windows: Sequence[IatWindow], val_windows: Sequence[IatWindow], config: TrainConfig,
          labels: Sequence[str] | None = None, init: M.ModelParams | None = None) -> TrainResult:
    if not train_windows or not val_windows:
        raise EmptySplit("training and validation splits must both be non-empty")
    labels = list(labels) if labels is not None else label_map(list(train_windows) + list(val_windows))
    if len(labels) != 2:
        raise ConfigError(f"binary classifier needs exactly 2 device labels, got {len(labels)}")
    y_train = labels_for(train_windows, labels)
    if len(set(y_train.tolist())) < 2:
        raise SingleClassTraining("training split contains only one device")

    params = init.copy() if init is not None else M.ModelParams.init(
        config.input_hw, seed=config.seed, dropout_p=config.dropout_p, loss_kind=config.loss_kind)
    if tuple(params.input_hw) != config.input_hw:
        raise ConfigError(f"model input {params.input_hw} does not match plot style {config.input_hw}")
    if config.optimizer == "adam":
        opt_state = M.AdamState.zeros(params)
    else:
        opt_state = M.SgdState.zeros(params)

    cache = ImageCache(config.plot_style, config.image_cache_dir)
    base = [cache.get(w) for w in train_windows]
    for w in val_windows:
        cache.get(w)

    n = len(train_windows)
    history: list[EpochRecord] = []
    best_params, best_acc, best_epoch = params.copy(), -1.0, 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        loss_sum, correct = 0.0, 0
        for b, idx in enumerate(make_batches(n, config.batch_size, config.seed, epoch)):
            # augmentation draw index depends only on (epoch, sample), not batch position
            x = np.stack([to_input(augment(base[i], config.augment, (epoch - 1) * n + int(i))) for i in idx])
            y = y_train[idx]
            dropout_rng = np.random.default_rng([config.seed & 0xFFFFFFFFFFFFFFFF, epoch, b])
            prob, fwd = M.model_forward(x, params, "train", dropout_rng)
            values, dprob = M.loss(prob, y, params.loss_kind)
            grads = M.model_backward(fwd, params, dprob / len(idx))
            if config.optimizer == "adam":
                M.adam_step(params, grads, opt_state, config.learning_rate)
            else:
                M.sgd_step(params, grads, opt_state, config.learning_rate, config.momentum)
            loss_sum += float(values.sum())
            correct += int(np.sum((prob >= 0.5) == (y == 1)))
        val = evaluate(params, val_windows, config, labels, cache)
        rec = EpochRecord(epoch, loss_sum / n, correct / n, val.mean_loss, val.accuracy)
        history.append(rec)
        if val.accuracy >= best_acc:
            best_params, best_acc, best_epoch = params.copy(), val.accuracy, epoch
        log.info("epoch %d/%d train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f (%.1fs)",
                 epoch, config.epochs, rec.train_loss, rec.train_accuracy, rec.val_loss, rec.val_accuracy,
                 time.perf_counter() - t0)
    return TrainResult(best_params, history, best_epoch, params, labels)


HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def write_history(path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for r in history:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_accuracy), repr(r.val_loss),
                             repr(r.val_accuracy)])


def read_history(path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                        float(r["val_loss"]), float(r["val_acc"])) for r in rows]


def write_history_plots(directory, history: Sequence[EpochRecord]) -> None:
    """One PPM line plot per curve (accuracy and loss, train and validation)."""
    curves = {
        "train_accuracy": [r.train_accuracy for r in history],
        "val_accuracy": [r.val_accuracy for r in history],
        "train_loss": [r.train_loss for r in history],
        "val_loss": [r.val_loss for r in history],
    }
    for name, values in curves.items():
        if all(math.isfinite(v) for v in values):
            write_ppm(os.path.join(directory, f"{name}.ppm"), render_curve(values))


def history_dicts(history: Sequence[EpochRecord]) -> list[dict]:
    return [asdict(r) for r in history]
