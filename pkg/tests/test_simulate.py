import math

import numpy as np
import pytest

from iatprint.errors import ConfigError, DuplicateMac
from iatprint.iat import DeviceKey, compute_iats, device_streams
from iatprint.pcap import ProtocolClass, read_pcap
from iatprint.simulate import (DEFAULT_PROFILE_A, DEFAULT_PROFILE_B, DeviceProfile, benchmark_dataset,
                               generate_pcap, icmp_echo_frame, sample_iats)
from iatprint.pcap import classify_protocol

from conftest import MAC_A


def test_degenerate_limit_is_constant():
    prof = DeviceProfile("flat", MAC_A, 2.5e-3, 1.0, math.inf, 0.0)
    assert np.all(sample_iats(prof, 500) == 2.5e-3)


@pytest.mark.parametrize("profile", [DEFAULT_PROFILE_A, DEFAULT_PROFILE_B])
def test_sample_mean_within_three_standard_errors(profile):
    x = sample_iats(profile, 100_000)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - profile.mean_iat()) < 3 * se


def test_fraction_of_long_gaps():
    x = sample_iats(DEFAULT_PROFILE_A, 50_000)
    # one exponential inter-burst gap per burst; intra-burst gamma gaps essentially never exceed 20 ms
    assert np.mean(x > 0.02) == pytest.approx(math.exp(-0.02 / 0.150) / 20, abs=0.003)


def test_deterministic_and_seed_dependent():
    assert np.array_equal(sample_iats(DEFAULT_PROFILE_A, 1000), sample_iats(DEFAULT_PROFILE_A, 1000))
    assert not np.array_equal(sample_iats(DEFAULT_PROFILE_A, 1000), sample_iats(DEFAULT_PROFILE_A, 1000, seed=1))


def test_quantized_and_positive():
    prof = DeviceProfile("fast", MAC_A, 3e-7, 1e-3, 4, 1.0, clock_quantum=1e-6)
    x = sample_iats(prof, 5000)
    ticks = x / 1e-6
    assert np.all(x >= 1e-6) and np.allclose(ticks, np.round(ticks), atol=1e-6)


@pytest.mark.parametrize("kwargs", [dict(intra_burst_mean=0.0), dict(inter_burst_mean=1e-3),
                                    dict(burst_length_mean=0.5), dict(jitter_cv=-1.0), dict(mac=b"\x01")])
def test_profile_validation(kwargs):
    base = dict(name="x", mac=MAC_A, intra_burst_mean=2e-3, inter_burst_mean=0.1, burst_length_mean=10,
                jitter_cv=0.3)
    with pytest.raises(ConfigError):
        DeviceProfile(**{**base, **kwargs})


def test_profile_dict_round_trip():
    assert DeviceProfile.from_dict(DEFAULT_PROFILE_B.to_dict()) == DEFAULT_PROFILE_B
    with pytest.raises(ConfigError):
        DeviceProfile.from_dict({**DEFAULT_PROFILE_B.to_dict(), "colour": "red"})


def test_icmp_frame_dissects():
    d = classify_protocol(icmp_echo_frame(MAC_A, bytes([192, 168, 4, 10]), 7))
    assert d.protocol_class is ProtocolClass.ICMP and d.src_mac == MAC_A


def test_three_packet_capture(tmp_path):
    path = tmp_path / "three.pcap"
    sampled = generate_pcap([DEFAULT_PROFILE_A], 3, path)
    header, records, stats = read_pcap(path)
    assert header.ts_resolution == "microsecond" and header.linktype == 1
    assert len(records) == 3 and all(r.protocol_class is ProtocolClass.ICMP for r in records)
    assert all(r.src_mac == DEFAULT_PROFILE_A.mac for r in records)
    t = np.array([r.timestamp for r in records])
    assert np.allclose(np.diff(t), sampled["02:00:00:00:a0:01"][1:], atol=1e-6, rtol=0)


def test_two_profile_round_trip(tmp_path):
    path = tmp_path / "two.pcap"
    sampled = generate_pcap([DEFAULT_PROFILE_A, DEFAULT_PROFILE_B], 400, path)
    _, records, stats = read_pcap(path)
    assert stats.skipped == 0 and stats.total == 800
    ts = [r.timestamp for r in records]
    assert ts == sorted(ts)
    for mac, stream in device_streams(records).items():
        assert len(stream) == 400 and np.all(np.diff(stream) > 0)
        iats = compute_iats(stream).iats
        assert np.max(np.abs(iats - sampled[str(mac)][1:])) <= 1e-6


def test_duplicate_mac(tmp_path):
    with pytest.raises(DuplicateMac):
        generate_pcap([DEFAULT_PROFILE_A, DEFAULT_PROFILE_A], 3, tmp_path / "x.pcap")


def test_benchmark_dataset_counts():
    ws = benchmark_dataset(windows_per_device=(7, 5))
    keys = [w.device for w in ws]
    assert keys.count(DeviceKey(DEFAULT_PROFILE_A.mac)) == 7 and keys.count(DeviceKey(DEFAULT_PROFILE_B.mac)) == 5
    assert all(w.values.size == 100 for w in ws)
    with pytest.raises(ValueError):
        benchmark_dataset(windows_per_device=0)
