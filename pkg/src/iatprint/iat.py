"""Per-device inter-arrival times, fixed-size windows, and the train/validation split."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .pcap import PacketRecord, mac_to_str, parse_mac

DEFAULT_WINDOW = 100


@dataclass(frozen=True, order=True)
class DeviceKey:
    mac: bytes

    def __str__(self) -> str:
        return mac_to_str(self.mac)

    @classmethod
    def parse(cls, text: str) -> "DeviceKey":
        return cls(parse_mac(text))

    def as_int(self) -> int:
        return int.from_bytes(self.mac, "big")


@dataclass
class IatSeries:
    device: DeviceKey | None
    iats: np.ndarray
    dropped_nonpositive: int = 0


@dataclass
class IatWindow:
    device: DeviceKey
    values: np.ndarray
    window_index: int
    source: str = ""
    filter_model: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps({
            "device": str(self.device),
            "window_index": self.window_index,
            "values": [float(v) for v in self.values],
            "source": self.source,
            "filter": self.filter_model,
        })

    @classmethod
    def from_json(cls, line: str | dict) -> "IatWindow":
        obj = json.loads(line) if isinstance(line, str) else line
        return cls(
            device=DeviceKey.parse(obj["device"]),
            values=np.array(obj["values"], dtype=np.float64),
            window_index=int(obj.get("window_index", 0)),
            source=obj.get("source", ""),
            filter_model=obj.get("filter", ""),
        )


@dataclass
class DatasetSplit:
    train: list[IatWindow]
    validation: list[IatWindow]
    seed: int
    ratio: float
    per_device: dict = field(default_factory=dict)  # device str -> (n_train, n_val)


def device_streams(records: Iterable[PacketRecord]) -> dict[DeviceKey, list[float]]:
    """Timestamps keyed by source MAC, in file order."""
    streams: dict[DeviceKey, list[float]] = {}
    for r in records:
        streams.setdefault(DeviceKey(r.src_mac), []).append(r.timestamp)
    return streams


def compute_iats(timestamps: Sequence[float], device: DeviceKey | None = None) -> IatSeries:
    t = np.asarray(timestamps, dtype=np.float64)
    if t.size < 2:
        return IatSeries(device, np.empty(0), 0)
    diffs = np.diff(t)
    keep = diffs > 0
    return IatSeries(device, diffs[keep], int(diffs.size - keep.sum()))


def window_series(series: IatSeries, w: int = DEFAULT_WINDOW, stride: int | None = None,
                  source: str = "", filter_model: str = "") -> list[IatWindow]:
    if w < 2:
        raise ValueError("window size must be at least 2")
    stride = w if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be positive")
    n = series.iats.size
    out = []
    for idx, start in enumerate(range(0, n - w + 1, stride)):
        out.append(IatWindow(series.device, series.iats[start:start + w].copy(), idx, source, filter_model))
    return out


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(windows: Sequence[IatWindow], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Stratified per-device shuffle split.

    Each device's windows are shuffled by a generator seeded from
    ``(seed, device)``; the first ``round_half_up(ratio * n)`` go to training.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    by_device: dict[DeviceKey, list[IatWindow]] = {}
    for win in windows:
        by_device.setdefault(win.device, []).append(win)
    train, val, counts = [], [], {}
    for device in sorted(by_device):
        group = by_device[device]
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, device.as_int()])
        order = rng.permutation(len(group))
        n_train = round_half_up(ratio * len(group))
        train.extend(group[i] for i in order[:n_train])
        val.extend(group[i] for i in order[n_train:])
        counts[str(device)] = (n_train, len(group) - n_train)
    return DatasetSplit(train, val, seed, ratio, counts)


def windows_from_records(records: Iterable[PacketRecord], w: int = DEFAULT_WINDOW, source: str = "",
                         filter_model: str = "") -> tuple[list[IatWindow], dict[DeviceKey, IatSeries]]:
    series = {}
    windows = []
    for device, ts in device_streams(records).items():
        s = compute_iats(ts, device)
        series[device] = s
        windows.extend(window_series(s, w, source=source, filter_model=filter_model))
    return windows, series


def write_manifest(path, windows: Iterable[IatWindow]) -> int:
    n = 0
    with open(path, "w") as fh:
        for win in windows:
            fh.write(win.to_json())
            fh.write("\n")
            n += 1
    return n


def read_manifest(path) -> list[IatWindow]:
    with open(path) as fh:
        return [IatWindow.from_json(line) for line in fh if line.strip()]
