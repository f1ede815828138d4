"""Synthetic bursty device traffic: IAT sampling and pcap generation."""
from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DuplicateMac
from .iat import DeviceKey, IatSeries, IatWindow, window_series
from .pcap import mac_to_str, parse_mac, write_pcap

ROUTER_MAC = bytes.fromhex("020000000001")
ROUTER_IP = bytes([192, 168, 4, 1])
BASE_EPOCH = 1_546_300_800  # 2019-01-01T00:00:00Z


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    mac: bytes
    intra_burst_mean: float
    inter_burst_mean: float
    burst_length_mean: float
    jitter_cv: float
    clock_quantum: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if len(self.mac) != 6:
            raise ConfigError(f"profile {self.name!r}: MAC must be 6 bytes")
        if min(self.intra_burst_mean, self.inter_burst_mean, self.clock_quantum) <= 0:
            raise ConfigError(f"profile {self.name!r}: time parameters must be positive")
        if self.inter_burst_mean <= self.intra_burst_mean:
            raise ConfigError(f"profile {self.name!r}: inter_burst_mean must exceed intra_burst_mean")
        if self.burst_length_mean < 1:
            raise ConfigError(f"profile {self.name!r}: burst_length_mean must be >= 1")
        if self.jitter_cv < 0:
            raise ConfigError(f"profile {self.name!r}: jitter_cv must be >= 0")

    def mean_iat(self) -> float:
        """Analytic mean IAT of the renewal process (before quantization)."""
        if math.isinf(self.burst_length_mean):
            return self.intra_burst_mean
        p = 1.0 / self.burst_length_mean
        return (1 - p) * self.intra_burst_mean + p * self.inter_burst_mean

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mac"] = mac_to_str(self.mac)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown profile keys: {sorted(unknown)}")
        d = dict(d)
        d["mac"] = parse_mac(d["mac"]) if isinstance(d.get("mac"), str) else d.get("mac")
        return cls(**d)


DEFAULT_PROFILE_A = DeviceProfile("device-a", bytes.fromhex("02000000a001"), 2e-3, 0.150, 20, 0.3, 1e-6, 1001)
DEFAULT_PROFILE_B = DeviceProfile("device-b", bytes.fromhex("02000000b002"), 3e-3, 0.300, 12, 0.5, 1e-6, 2002)


def _quantize(x: np.ndarray, q: float) -> np.ndarray:
    ticks = np.maximum(np.floor(x / q + 0.5), 1.0)
    return ticks * q


def sample_iats(profile: DeviceProfile, n: int, seed: int | None = None) -> np.ndarray:
    """Draw ``n`` IATs from the two-regime burst process.

    A burst of ``L ~ Geometric(1/burst_length_mean)`` packets contributes
    ``L - 1`` intra-burst gaps (Gamma, given mean and CV) followed by one
    inter-burst gap (Exponential).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(profile.seed if seed is None else seed)
    p = 0.0 if math.isinf(profile.burst_length_mean) else 1.0 / profile.burst_length_mean
    out = np.empty(n)
    filled = 0
    while filled < n:
        # one batch of bursts at a time; each draw consumes the stream in a fixed order
        n_bursts = max(16, int((n - filled) * p * 1.2) + 1) if p > 0 else 1
        lengths = rng.geometric(p, n_bursts) if p > 0 else np.full(1, n - filled + 1, dtype=np.int64)
        n_intra = int((lengths - 1).sum())
        if profile.jitter_cv > 0:
            shape = 1.0 / profile.jitter_cv ** 2
            intra = rng.gamma(shape, profile.intra_burst_mean / shape, n_intra)
        else:
            intra = np.full(n_intra, profile.intra_burst_mean)
        inter = rng.exponential(profile.inter_burst_mean, n_bursts)
        pos = 0
        for b, length in enumerate(lengths):
            take = min(int(length) - 1, n - filled)
            out[filled:filled + take] = intra[pos:pos + take]
            filled += take
            pos += int(length) - 1
            if filled >= n:
                break
            out[filled] = inter[b]
            filled += 1
            if filled >= n:
                break
    return _quantize(out, profile.clock_quantum)


def icmp_echo_frame(src_mac: bytes, src_ip: bytes, seq: int, ident: int = 0x1D1D) -> bytes:
    icmp = bytearray(struct.pack(">BBHHH", 8, 0, 0, ident & 0xFFFF, seq & 0xFFFF))
    struct.pack_into(">H", icmp, 2, _inet_checksum(icmp))
    ip = bytearray(struct.pack(">BBHHHBBH4s4s", 0x45, 0, 20 + len(icmp), seq & 0xFFFF, 0, 64, 1, 0,
                               src_ip, ROUTER_IP))
    struct.pack_into(">H", ip, 10, _inet_checksum(ip))
    eth = ROUTER_MAC + src_mac + struct.pack(">H", 0x0800)
    return eth + bytes(ip) + bytes(icmp)


def _inet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data = bytes(data) + b"\0"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def generate_pcap(profiles, packets_per_device: int, path) -> dict[str, np.ndarray]:
    """Write an interleaved capture of ICMP echo traffic, one stream per profile.

    Device ``i`` sends ``packets_per_device`` packets at ``BASE_EPOCH +
    cumsum(sample_iats(profile, packets_per_device))``. Returns the sampled
    IATs per device MAC string.
    """
    macs = [p.mac for p in profiles]
    if len(set(macs)) != len(macs):
        raise DuplicateMac("profiles must have distinct MAC addresses")
    events = []
    sampled = {}
    for dev_idx, prof in enumerate(profiles):
        iats = sample_iats(prof, packets_per_device)
        sampled[mac_to_str(prof.mac)] = iats
        ticks = np.cumsum(np.floor(iats / 1e-6 + 0.5).astype(np.int64))
        src_ip = bytes([192, 168, 4, 10 + dev_idx])
        for seq, tick in enumerate(ticks):
            events.append((int(tick), dev_idx, seq, prof.mac, src_ip))
    events.sort(key=lambda e: (e[0], e[1]))
    frames = []
    for tick, _, seq, mac, src_ip in events:
        sec, usec = divmod(tick, 1_000_000)
        frames.append((BASE_EPOCH + sec, usec, icmp_echo_frame(mac, src_ip, seq)))
    write_pcap(path, frames)
    return sampled


def benchmark_dataset(profile_a: DeviceProfile = DEFAULT_PROFILE_A,
                      profile_b: DeviceProfile = DEFAULT_PROFILE_B,
                      windows_per_device=(636, 608), w: int = 100) -> list[IatWindow]:
    """Labelled windows for a two-device experiment, directly from sampled IATs."""
    if isinstance(windows_per_device, int):
        windows_per_device = (windows_per_device, windows_per_device)
    if min(windows_per_device) < 1:
        raise ValueError("windows_per_device must be >= 1")
    windows = []
    for prof, count in zip((profile_a, profile_b), windows_per_device):
        series = IatSeries(DeviceKey(prof.mac), sample_iats(prof, count * w))
        windows.extend(window_series(series, w, source=f"simulate:{prof.name}", filter_model="all"))
    return windows
