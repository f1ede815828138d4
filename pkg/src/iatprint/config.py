"""Experiment configuration: strict JSON loading and echoing."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentParams
from .errors import ConfigError
from .pcap import FilterModel
from .render import PlotStyle
from .simulate import DEFAULT_PROFILE_A, DEFAULT_PROFILE_B, DeviceProfile
from .train import TrainConfig

_TRAIN_KEYS = ("batch_size", "epochs", "learning_rate", "loss_kind", "optimizer", "momentum", "dropout_p")


@dataclass
class SimulateSection:
    profiles: list = field(default_factory=lambda: [DEFAULT_PROFILE_A, DEFAULT_PROFILE_B])
    windows_per_device: list = field(default_factory=lambda: [636, 608])
    packets_per_device: int = 1000


@dataclass
class Paths:
    pcap: str | None = None
    manifest: str | None = None
    out_dir: str = "experiment"
    image_cache: str | None = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    filter: str | None = None
    window_size: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)
    simulate: SimulateSection | None = None
    paths: Paths = field(default_factory=Paths)

    @property
    def augment(self) -> AugmentParams:
        return self.train.augment

    @property
    def plot_style(self) -> PlotStyle:
        return self.train.plot_style

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with ``seed`` applied to the split, init, batching, dropout, augmentation and profiles."""
        train = dataclasses.replace(self.train, seed=seed,
                                    augment=dataclasses.replace(self.train.augment, seed=seed))
        sim = self.simulate
        if sim is not None:
            profiles = [dataclasses.replace(p, seed=derive_seed(seed, i)) for i, p in enumerate(sim.profiles)]
            sim = dataclasses.replace(sim, profiles=profiles)
        return dataclasses.replace(self, seed=seed, train=train, simulate=sim)

    def to_dict(self) -> dict:
        t = self.train
        out = {
            "seed": self.seed,
            "filter": self.filter,
            "window_size": self.window_size,
            "split_ratio": t.split_ratio,
            "train": {k: getattr(t, k) for k in _TRAIN_KEYS},
            "augment": t.augment.to_dict(),
            "plot_style": t.plot_style.to_dict(),
            "paths": dataclasses.asdict(self.paths),
        }
        if self.simulate is not None:
            out["simulate"] = {
                "profiles": [p.to_dict() for p in self.simulate.profiles],
                "windows_per_device": list(self.simulate.windows_per_device),
                "packets_per_device": self.simulate.packets_per_device,
            }
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]).generate_state(1, np.uint64)[0] >> 1)


def _check_keys(section: str, obj, allowed) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{section} must be a JSON object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")


def _build(cls, section: str, obj: dict):
    _check_keys(section, obj, [f.name for f in dataclasses.fields(cls)])
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_config(obj: dict) -> ExperimentConfig:
    _check_keys("config", obj, ("seed", "filter", "window_size", "split_ratio", "train", "augment",
                                "plot_style", "simulate", "paths"))
    seed = int(obj.get("seed", 0))
    filt = obj.get("filter")
    if filt is not None:
        try:
            filt = FilterModel(str(filt).lower()).value
        except ValueError:
            raise ConfigError(f"filter must be one of {[m.value for m in FilterModel]}") from None
    window_size = int(obj.get("window_size", 100))
    if window_size < 2:
        raise ConfigError("window_size must be >= 2")

    train_obj = obj.get("train", {})
    _check_keys("train", train_obj, _TRAIN_KEYS)
    augment_obj = dict(obj.get("augment", {}))
    augment_obj.setdefault("seed", seed)
    augment = _build(AugmentParams, "augment", augment_obj)
    style = _build(PlotStyle, "plot_style", obj.get("plot_style", {}))
    train = TrainConfig(**train_obj, split_ratio=float(obj.get("split_ratio", 0.8)), seed=seed,
                        augment=augment, plot_style=style)

    simulate = None
    if "simulate" in obj:
        sim_obj = obj["simulate"]
        _check_keys("simulate", sim_obj, ("profiles", "windows_per_device", "packets_per_device"))
        profiles = [DeviceProfile.from_dict(p) for p in sim_obj.get("profiles", [])] or None
        simulate = SimulateSection(
            **({"profiles": profiles} if profiles else {}),
            **({"windows_per_device": list(sim_obj["windows_per_device"])} if "windows_per_device" in sim_obj else {}),
            **({"packets_per_device": int(sim_obj["packets_per_device"])} if "packets_per_device" in sim_obj else {}),
        )
    paths = _build(Paths, "paths", obj.get("paths", {}))
    return ExperimentConfig(seed, filt, window_size, train, simulate, paths)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(obj)


def check_inputs(cfg: ExperimentConfig) -> None:
    for name in ("pcap", "manifest"):
        p = getattr(cfg.paths, name)
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(f"paths.{name} does not exist: {p}")
