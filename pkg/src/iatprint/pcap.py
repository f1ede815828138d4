"""Classic pcap reading/writing and Ethernet/ARP/IPv4 dissection."""
from __future__ import annotations

import enum
import io
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, NamedTuple, Optional, Sequence

from .errors import (
    FrameTooShort,
    MalformedFrame,
    PcapNgNotSupported,
    SnaplenExceeded,
    TruncatedPacketHeader,
    TruncatedPayload,
    UnknownMagic,
    UnsupportedLinkType,
)

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100
ETHERTYPE_QINQ = 0x88A8


class ProtocolClass(str, enum.Enum):
    ARP = "ARP"
    ICMP = "ICMP"
    TCP = "TCP"
    UDP = "UDP"
    OTHER_IP = "OTHER_IP"
    NON_IP = "NON_IP"


class FilterModel(str, enum.Enum):
    MODEL2 = "model2"
    MODEL3 = "model3"
    MODEL4 = "model4"
    ALL = "all"


FILTER_CLASSES = {
    FilterModel.MODEL2: frozenset({ProtocolClass.ICMP}),
    FilterModel.MODEL3: frozenset({ProtocolClass.UDP, ProtocolClass.ARP, ProtocolClass.ICMP}),
    FilterModel.MODEL4: frozenset({ProtocolClass.TCP, ProtocolClass.OTHER_IP}),
    FilterModel.ALL: frozenset(ProtocolClass),
}


@dataclass(frozen=True)
class PcapFileHeader:
    byte_order: str  # "little" or "big": the file's byte order
    ts_resolution: str  # "microsecond" or "nanosecond"
    version_major: int
    version_minor: int
    thiszone: int
    sigfigs: int
    snaplen: int
    linktype: int

    @property
    def endian(self) -> str:
        return "<" if self.byte_order == "little" else ">"

    @property
    def ts_scale(self) -> float:
        return 1e-6 if self.ts_resolution == "microsecond" else 1e-9

    def to_bytes(self) -> bytes:
        magic = MAGIC_MICRO if self.ts_resolution == "microsecond" else MAGIC_NANO
        return struct.pack(
            self.endian + "IHHiIII",
            magic,
            self.version_major,
            self.version_minor,
            self.thiszone,
            self.sigfigs,
            self.snaplen,
            self.linktype,
        )


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    src_mac: bytes
    dst_mac: bytes
    protocol_class: ProtocolClass
    src_ip: Optional[bytes]
    dst_ip: Optional[bytes]
    src_port: Optional[int]
    dst_port: Optional[int]
    captured_len: int
    original_len: int
    # raw header fields, kept so a file can be re-serialized losslessly
    ts_sec: int = field(default=0, repr=False)
    ts_frac: int = field(default=0, repr=False)
    frame: bytes = field(default=b"", repr=False, compare=False)


@dataclass
class DissectStats:
    total: int = 0
    dissected: int = 0
    skipped: int = 0
    per_class: Counter = field(default_factory=Counter)

    def summary_line(self) -> str:
        classes = " ".join(f"{c.value}={self.per_class.get(c, 0)}" for c in ProtocolClass)
        return f"packets total={self.total} dissected={self.dissected} skipped={self.skipped} {classes}"


class Dissection(NamedTuple):
    protocol_class: ProtocolClass
    src_mac: bytes
    dst_mac: bytes
    src_ip: Optional[bytes] = None
    dst_ip: Optional[bytes] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None


def _magic_byte_order(head: bytes) -> tuple[str, int]:
    (le_magic,) = struct.unpack("<I", head)
    (be_magic,) = struct.unpack(">I", head)
    if PCAPNG_MAGIC in (le_magic, be_magic):
        raise PcapNgNotSupported("input is a pcapng file; only classic pcap is supported")
    if le_magic in (MAGIC_MICRO, MAGIC_NANO):
        return "little", le_magic
    if be_magic in (MAGIC_MICRO, MAGIC_NANO):
        return "big", be_magic
    raise UnknownMagic(f"unrecognised pcap magic 0x{head.hex()}")


def parse_file_header(data: bytes) -> PcapFileHeader:
    if len(data) != GLOBAL_HEADER_LEN:
        raise TruncatedPacketHeader(f"pcap global header needs {GLOBAL_HEADER_LEN} bytes, got {len(data)}")
    byte_order, magic = _magic_byte_order(data[:4])
    endian = "<" if byte_order == "little" else ">"
    _, vmaj, vmin, thiszone, sigfigs, snaplen, linktype = struct.unpack(endian + "IHHiIII", data)
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"linktype {linktype} is not Ethernet (1)")
    return PcapFileHeader(
        byte_order=byte_order,
        ts_resolution="microsecond" if magic == MAGIC_MICRO else "nanosecond",
        version_major=vmaj,
        version_minor=vmin,
        thiszone=thiszone,
        sigfigs=sigfigs,
        snaplen=snaplen,
        linktype=linktype,
    )


def classify_protocol(frame: bytes) -> Dissection:
    """Dissect an Ethernet frame down to its protocol class and addresses."""
    if len(frame) < ETH_HEADER_LEN:
        raise FrameTooShort(f"frame of {len(frame)} bytes is shorter than an Ethernet header")
    dst_mac = bytes(frame[0:6])
    src_mac = bytes(frame[6:12])
    ethertype = (frame[12] << 8) | frame[13]
    offset = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN:
        if len(frame) < offset + 4:
            raise MalformedFrame("truncated VLAN tag")
        ethertype = (frame[offset + 2] << 8) | frame[offset + 3]
        offset += 4
        if ethertype in (ETHERTYPE_VLAN, ETHERTYPE_QINQ):
            return Dissection(ProtocolClass.NON_IP, src_mac, dst_mac)

    if ethertype == ETHERTYPE_ARP:
        body = frame[offset:]
        src_ip = dst_ip = None
        # sender/target IPv4 only for Ethernet/IPv4 ARP with a complete body
        if len(body) >= 28 and body[4] == 6 and body[5] == 4:
            src_ip = bytes(body[14:18])
            dst_ip = bytes(body[24:28])
        return Dissection(ProtocolClass.ARP, src_mac, dst_mac, src_ip, dst_ip)

    if ethertype != ETHERTYPE_IPV4:
        return Dissection(ProtocolClass.NON_IP, src_mac, dst_mac)

    ip = frame[offset:]
    if len(ip) < 20:
        raise MalformedFrame("truncated IPv4 header")
    version, ihl = ip[0] >> 4, (ip[0] & 0x0F) * 4
    if version != 4 or ihl < 20:
        raise MalformedFrame(f"bad IPv4 version/IHL byte 0x{ip[0]:02x}")
    if len(ip) < ihl:
        raise MalformedFrame("IPv4 options exceed captured bytes")
    proto = ip[9]
    src_ip, dst_ip = bytes(ip[12:16]), bytes(ip[16:20])
    frag_offset = ((ip[6] & 0x1F) << 8) | ip[7]
    if proto == 1:
        return Dissection(ProtocolClass.ICMP, src_mac, dst_mac, src_ip, dst_ip)
    if proto in (6, 17):
        cls = ProtocolClass.TCP if proto == 6 else ProtocolClass.UDP
        src_port = dst_port = None
        if frag_offset == 0 and len(ip) >= ihl + 4:
            src_port, dst_port = struct.unpack(">HH", ip[ihl:ihl + 4])
        return Dissection(cls, src_mac, dst_mac, src_ip, dst_ip, src_port, dst_port)
    return Dissection(ProtocolClass.OTHER_IP, src_mac, dst_mac, src_ip, dst_ip)


def read_records(stream: BinaryIO | bytes, header: PcapFileHeader):
    """Read every record after the global header.

    Returns ``(records, stats)``. Frames that fail dissection are counted as
    skipped; structural truncation of the file raises.
    """
    data = stream if isinstance(stream, (bytes, bytearray, memoryview)) else stream.read()
    view = memoryview(data)
    rec_fmt = struct.Struct(header.endian + "IIII")
    scale = header.ts_scale
    records: list[PacketRecord] = []
    stats = DissectStats()
    pos, end = 0, len(view)
    while pos < end:
        if end - pos < RECORD_HEADER_LEN:
            raise TruncatedPacketHeader(f"{end - pos} stray bytes at offset {pos} (record header needs 16)")
        ts_sec, ts_frac, incl_len, orig_len = rec_fmt.unpack_from(view, pos)
        pos += RECORD_HEADER_LEN
        if header.snaplen and incl_len > header.snaplen:
            raise SnaplenExceeded(f"record at offset {pos - 16} captures {incl_len} bytes > snaplen {header.snaplen}")
        if incl_len > end - pos:
            raise TruncatedPayload(f"record claims {incl_len} bytes but only {end - pos} remain")
        frame = bytes(view[pos:pos + incl_len])
        pos += incl_len
        stats.total += 1
        try:
            d = classify_protocol(frame)
        except (FrameTooShort, MalformedFrame):
            stats.skipped += 1
            continue
        stats.dissected += 1
        stats.per_class[d.protocol_class] += 1
        records.append(PacketRecord(
            timestamp=ts_sec + ts_frac * scale,
            src_mac=d.src_mac,
            dst_mac=d.dst_mac,
            protocol_class=d.protocol_class,
            src_ip=d.src_ip,
            dst_ip=d.dst_ip,
            src_port=d.src_port,
            dst_port=d.dst_port,
            captured_len=incl_len,
            original_len=orig_len,
            ts_sec=ts_sec,
            ts_frac=ts_frac,
            frame=frame,
        ))
    return records, stats


def read_pcap(path):
    """Parse a pcap file from disk: ``(header, records, stats)``."""
    with open(path, "rb") as fh:
        head = fh.read(GLOBAL_HEADER_LEN)
        if len(head) < 4:
            raise UnknownMagic("file too short to hold a pcap magic number")
        if len(head) < GLOBAL_HEADER_LEN:
            _magic_byte_order(head[:4])  # a foreign format reports as such before truncation
            raise TruncatedPacketHeader("pcap global header truncated")
        header = parse_file_header(head)
        records, stats = read_records(fh, header)
    return header, records, stats


def apply_filter(records: Iterable[PacketRecord], model: FilterModel | str) -> list[PacketRecord]:
    allowed = FILTER_CLASSES[FilterModel(model)]
    return [r for r in records if r.protocol_class in allowed]


def serialize(header: PcapFileHeader, records: Sequence[PacketRecord]) -> bytes:
    """Inverse of parsing for records that carry their raw frame."""
    buf = io.BytesIO()
    buf.write(header.to_bytes())
    rec_fmt = struct.Struct(header.endian + "IIII")
    for r in records:
        buf.write(rec_fmt.pack(r.ts_sec, r.ts_frac, len(r.frame), r.original_len))
        buf.write(r.frame)
    return buf.getvalue()


def write_pcap(path, frames: Iterable[tuple[int, int, bytes]], snaplen: int = 65535,
               ts_resolution: str = "microsecond") -> None:
    """Write ``(ts_sec, ts_frac, frame)`` tuples as a little-endian classic pcap."""
    header = PcapFileHeader("little", ts_resolution, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)
    with open(path, "wb") as fh:
        fh.write(header.to_bytes())
        for ts_sec, ts_frac, frame in frames:
            fh.write(struct.pack("<IIII", ts_sec, ts_frac, len(frame), len(frame)))
            fh.write(frame)


def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def parse_mac(text: str) -> bytes:
    parts = text.replace("-", ":").split(":")
    if len(parts) != 6:
        raise ValueError(f"not a MAC address: {text!r}")
    return bytes(int(p, 16) for p in parts)
