import io
import struct

import dpkt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iatprint.errors import (FrameTooShort, PcapNgNotSupported, SnaplenExceeded, TruncatedPacketHeader,
                             TruncatedPayload, UnknownMagic, UnsupportedLinkType)
from iatprint.pcap import (FILTER_CLASSES, FilterModel, ProtocolClass, apply_filter, classify_protocol,
                           mac_to_str, parse_file_header, parse_mac, read_pcap, read_records, serialize,
                           write_pcap)

from conftest import MAC_A, MAC_B, arp_frame, eth, icmp_frame, ipv4, pcap_bytes, tcp_frame, udp_frame


def _parse(data):
    header = parse_file_header(data[:24])
    return header, *read_records(data[24:], header)


# --- global header -----------------------------------------------------------

def test_magic_little_endian_microseconds():
    h = parse_file_header(pcap_bytes([])[:24])
    assert (h.byte_order, h.ts_resolution) == ("little", "microsecond")


def test_magic_nanoseconds():
    h = parse_file_header(pcap_bytes([], magic=0xA1B23C4D)[:24])
    assert h.ts_resolution == "nanosecond"


def test_magic_big_endian():
    h = parse_file_header(pcap_bytes([], endian=">")[:24])
    assert h.byte_order == "big" and h.snaplen == 65535 and h.linktype == 1


def test_header_written_by_dpkt():
    buf = io.BytesIO()
    dpkt.pcap.Writer(buf, snaplen=262144, linktype=1).writepkt(icmp_frame(), ts=1546300800.25)
    data = buf.getvalue()
    h = parse_file_header(data[:24])
    assert (h.version_major, h.version_minor, h.thiszone, h.sigfigs, h.snaplen, h.linktype) == \
        (2, 4, 0, 0, 262144, 1)
    _, records, stats = _parse(data)
    assert stats.dissected == 1
    assert records[0].timestamp == pytest.approx(1546300800.25, abs=1e-6)


def test_our_output_read_by_dpkt(tmp_path):
    path = tmp_path / "x.pcap"
    frames = [(100, 5, icmp_frame()), (100, 999_999, udp_frame()), (101, 0, tcp_frame())]
    write_pcap(path, frames)
    with open(path, "rb") as fh:
        got = [(ts, bytes(buf)) for ts, buf in dpkt.pcap.Reader(fh)]
    assert [f for _, f in got] == [f for *_, f in frames]
    assert got[1][0] == pytest.approx(100.999999)


def test_pcapng_rejected():
    with pytest.raises(PcapNgNotSupported):
        parse_file_header(bytes.fromhex("0a0d0d0a") + bytes(20))


def test_unknown_magic():
    with pytest.raises(UnknownMagic):
        parse_file_header(b"\x00" * 24)


def test_non_ethernet_linktype():
    with pytest.raises(UnsupportedLinkType):
        parse_file_header(pcap_bytes([], linktype=127)[:24])


def test_short_file(tmp_path):
    path = tmp_path / "short.pcap"
    path.write_bytes(pcap_bytes([])[:10])
    with pytest.raises(TruncatedPacketHeader):
        read_pcap(path)


# --- records -----------------------------------------------------------------

def test_empty_body():
    _, records, stats = _parse(pcap_bytes([]))
    assert records == [] and (stats.total, stats.dissected, stats.skipped) == (0, 0, 0)


def test_truncated_payload_after_good_record():
    data = pcap_bytes([(1, 0, icmp_frame())])
    data += struct.pack("<IIII", 2, 0, 10, 10) + b"abcd"
    header = parse_file_header(data[:24])
    with pytest.raises(TruncatedPayload):
        read_records(data[24:], header)


def test_truncated_record_header():
    data = pcap_bytes([(1, 0, icmp_frame())]) + b"\x01\x02\x03"
    with pytest.raises(TruncatedPacketHeader):
        _parse(data)


def test_snaplen_exceeded():
    with pytest.raises(SnaplenExceeded):
        _parse(pcap_bytes([(1, 0, icmp_frame())], snaplen=20))


def test_short_frame_is_skipped_and_counted():
    _, records, stats = _parse(pcap_bytes([(1, 0, b"\x00" * 10), (2, 0, icmp_frame())]))
    assert len(records) == 1 and stats.skipped == 1 and stats.total == 2


def test_timestamps_micro_and_nano():
    _, rec, _ = _parse(pcap_bytes([(7, 250_000, icmp_frame())]))
    assert rec[0].timestamp == pytest.approx(7.25)
    _, rec, _ = _parse(pcap_bytes([(7, 250_000_000, icmp_frame())], magic=0xA1B23C4D))
    assert rec[0].timestamp == pytest.approx(7.25)


def test_big_endian_records():
    _, rec, _ = _parse(pcap_bytes([(3, 5, udp_frame())], endian=">"))
    assert rec[0].ts_sec == 3 and rec[0].ts_frac == 5 and rec[0].protocol_class is ProtocolClass.UDP


# --- dissection --------------------------------------------------------------

def test_classify_tcp_with_ports():
    d = classify_protocol(tcp_frame(sport=1234, dport=443))
    assert d.protocol_class is ProtocolClass.TCP and (d.src_port, d.dst_port) == (1234, 443)
    assert d.src_mac == MAC_A


def test_classify_udp():
    d = classify_protocol(udp_frame(sport=68, dport=67))
    assert d.protocol_class is ProtocolClass.UDP and d.dst_port == 67


def test_classify_icmp_has_no_ports():
    d = classify_protocol(icmp_frame())
    assert d.protocol_class is ProtocolClass.ICMP and d.src_port is None and d.dst_port is None
    assert d.src_ip == b"\xc0\xa8\x04\x0a"


def test_classify_arp_addresses():
    d = classify_protocol(arp_frame())
    assert d.protocol_class is ProtocolClass.ARP
    assert d.src_ip == b"\xc0\xa8\x04\x0a" and d.dst_ip == b"\xc0\xa8\x04\x01"


def test_classify_other_ip_and_non_ip():
    assert classify_protocol(eth(payload=ipv4(47))).protocol_class is ProtocolClass.OTHER_IP
    assert classify_protocol(eth(ethertype=0x86DD, payload=bytes(40))).protocol_class is ProtocolClass.NON_IP


def test_vlan_unwrapped_once():
    inner = icmp_frame()
    tagged = inner[:12] + b"\x81\x00\x00\x05" + inner[12:]
    assert classify_protocol(tagged).protocol_class is ProtocolClass.ICMP
    double = inner[:12] + b"\x81\x00\x00\x05\x81\x00\x00\x06" + inner[12:]
    assert classify_protocol(double).protocol_class is ProtocolClass.NON_IP


def test_fragment_has_no_ports():
    frame = eth(payload=ipv4(17, payload=struct.pack(">HHHH", 1, 2, 8, 0), frag=10))
    d = classify_protocol(frame)
    assert d.protocol_class is ProtocolClass.UDP and d.src_port is None


def test_classify_too_short():
    with pytest.raises(FrameTooShort):
        classify_protocol(b"\x00" * 13)


# --- filters -----------------------------------------------------------------

def _records(frames):
    return _parse(pcap_bytes([(i, 0, f) for i, f in enumerate(frames)]))[1]


def test_filter_examples():
    recs = _records([icmp_frame(), tcp_frame(), arp_frame()])
    kinds = lambda model: [r.protocol_class for r in apply_filter(recs, model)]
    assert kinds(FilterModel.MODEL2) == [ProtocolClass.ICMP]
    assert kinds(FilterModel.MODEL3) == [ProtocolClass.ICMP, ProtocolClass.ARP]
    assert kinds(FilterModel.MODEL4) == [ProtocolClass.TCP]
    assert kinds("all") == [ProtocolClass.ICMP, ProtocolClass.TCP, ProtocolClass.ARP]


def test_filter_sets():
    assert FILTER_CLASSES[FilterModel.MODEL3] == {ProtocolClass.UDP, ProtocolClass.ARP, ProtocolClass.ICMP}
    assert FILTER_CLASSES[FilterModel.MODEL4] == {ProtocolClass.TCP, ProtocolClass.OTHER_IP}


def test_filter_unknown_model():
    with pytest.raises(ValueError):
        apply_filter([], "model1")


# --- round trips -------------------------------------------------------------

def test_serialize_round_trip_bytes():
    data = pcap_bytes([(1, 2, icmp_frame()), (1, 3, arp_frame(src=MAC_B)), (2, 0, b"\x01" * 20)])
    header, records, _ = _parse(data)
    assert records[2].protocol_class is ProtocolClass.NON_IP
    assert serialize(header, records) == data


frame_strategy = st.sampled_from([icmp_frame(), udp_frame(), tcp_frame(), arp_frame(), arp_frame(src=MAC_B)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 999_999), frame_strategy), max_size=20),
       st.sampled_from(["<", ">"]))
def test_serialize_round_trip_property(frames, endian):
    data = pcap_bytes(frames, endian=endian)
    header, records, stats = _parse(data)
    assert stats.skipped == 0 and len(records) == len(frames)
    assert serialize(header, records) == data


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=14, max_size=80))
def test_arbitrary_frames_never_crash(frame):
    _, records, stats = _parse(pcap_bytes([(0, 0, frame)]))
    assert stats.dissected + stats.skipped == 1


def test_mac_helpers():
    assert mac_to_str(MAC_A) == "02:00:00:00:a0:01"
    assert parse_mac("02-00-00-00-A0-01") == MAC_A
