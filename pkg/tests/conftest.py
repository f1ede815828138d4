import json
import os
import struct

import numpy as np
import pytest

DATA = os.path.join(os.path.dirname(__file__), "data")

MAC_A = bytes.fromhex("02000000a001")
MAC_B = bytes.fromhex("02000000b002")
ROUTER = bytes.fromhex("020000000001")


def eth(src=MAC_A, dst=ROUTER, ethertype=0x0800, payload=b""):
    return dst + src + struct.pack(">H", ethertype) + payload


def ipv4(proto, src=b"\xc0\xa8\x04\x0a", dst=b"\xc0\xa8\x04\x01", payload=b"", frag=0):
    total = 20 + len(payload)
    return struct.pack(">BBHHHBBH4s4s", 0x45, 0, total, 1, frag, 64, proto, 0, src, dst) + payload


def udp_frame(sport=5353, dport=53, src=MAC_A):
    return eth(src, payload=ipv4(17, payload=struct.pack(">HHHH", sport, dport, 8, 0)))


def tcp_frame(sport=40000, dport=443, src=MAC_A):
    return eth(src, payload=ipv4(6, payload=struct.pack(">HHII", sport, dport, 0, 0) + bytes(12)))


def icmp_frame(src=MAC_A):
    return eth(src, payload=ipv4(1, payload=bytes(8)))


def arp_frame(src=MAC_A, sender_ip=b"\xc0\xa8\x04\x0a", target_ip=b"\xc0\xa8\x04\x01"):
    body = struct.pack(">HHBBH", 1, 0x0800, 6, 4, 1) + src + sender_ip + bytes(6) + target_ip
    return eth(src, ethertype=0x0806, payload=body)


def pcap_bytes(frames, magic=0xA1B2C3D4, endian="<", snaplen=65535, linktype=1):
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype)
    for ts_sec, ts_frac, frame in frames:
        out += struct.pack(endian + "IIII", ts_sec, ts_frac, len(frame), len(frame)) + frame
    return out


@pytest.fixture(scope="session")
def reference_window():
    with open(os.path.join(DATA, "reference_window.json")) as fh:
        return np.array(json.load(fh)["values"])


@pytest.fixture(scope="session")
def goldens():
    with open(os.path.join(DATA, "goldens.json")) as fh:
        return json.load(fh)


# acceptance criteria report: number -> (title, passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2} {'PASS' if passed else 'FAIL'}  {title}  [{detail}]")
