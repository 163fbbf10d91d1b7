"""Classic PCAP reader and minimal IPv4/IPv6 + TCP/UDP header decoding.

Unparseable packets are skipped and counted, never fatal. Only the classic
capture format is supported (magic 0xA1B2C3D4 in either byte order), with
Ethernet (1) and raw-IP (101) link types.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

from ..errors import MalformedCapture

log = logging.getLogger(__name__)

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW_IP = 101

TCP_FLAG_NAMES = (
    (0x01, "FIN"), (0x02, "SYN"), (0x04, "RST"), (0x08, "PSH"),
    (0x10, "ACK"), (0x20, "URG"), (0x40, "ECE"), (0x80, "CWR"),
)


@dataclass
class PacketRecord:
    timestamp: float
    link_type: str                 # ethernet | raw-ip
    raw_bytes: bytes               # packet bytes from the IP header onward
    ip_version: int                # 4 | 6
    total_length: int
    ttl: int
    transport: str                 # tcp | udp | other
    tcp_flags: int | None = None   # present iff transport == tcp
    tcp_window: int | None = None
    payload_length: int = 0

    def __post_init__(self):
        has_tcp_fields = self.tcp_flags is not None and self.tcp_window is not None
        if (self.transport == "tcp") != has_tcp_fields:
            raise ValueError("tcp fields must be present exactly for TCP packets")

    def flag_names(self) -> list[str]:
        if self.tcp_flags is None:
            return []
        return [name for bit, name in TCP_FLAG_NAMES if self.tcp_flags & bit]


def decode_ip_packet(data: bytes, timestamp: float = 0.0,
                     link_type: str = "raw-ip") -> PacketRecord | None:
    """Decode bytes starting at the IP header; None when unparseable."""
    if len(data) < 1:
        return None
    version = data[0] >> 4
    if version == 4:
        if len(data) < 20:
            return None
        ihl = (data[0] & 0x0F) * 4
        if ihl < 20 or len(data) < ihl:
            return None
        total_length = int.from_bytes(data[2:4], "big")
        if total_length < ihl:
            return None
        ttl = data[8]
        proto = data[9]
        header_end = ihl
    elif version == 6:
        if len(data) < 40:
            return None
        payload_len = int.from_bytes(data[4:6], "big")
        total_length = 40 + payload_len
        ttl = data[7]  # hop limit
        proto = data[6]  # next header; extension chains are out of scope
        header_end = 40
    else:
        return None

    tcp_flags = tcp_window = None
    if proto == 6:
        if len(data) < header_end + 20:
            return None
        data_offset = (data[header_end + 12] >> 4) * 4
        if data_offset < 20:
            return None
        tcp_flags = data[header_end + 13]
        tcp_window = int.from_bytes(data[header_end + 14:header_end + 16], "big")
        transport = "tcp"
        payload_length = max(total_length - header_end - data_offset, 0)
    elif proto == 17:
        if len(data) < header_end + 8:
            return None
        transport = "udp"
        payload_length = max(total_length - header_end - 8, 0)
    else:
        transport = "other"
        payload_length = max(total_length - header_end, 0)

    return PacketRecord(timestamp=timestamp, link_type=link_type, raw_bytes=data,
                        ip_version=version, total_length=total_length, ttl=ttl,
                        transport=transport, tcp_flags=tcp_flags,
                        tcp_window=tcp_window, payload_length=payload_length)


def parse_pcap(path, limit: int | None = None) -> list[PacketRecord]:
    """Read records in file order; bad packets are skipped and counted."""
    blob = Path(path).read_bytes()  # missing file raises FileNotFoundError
    if len(blob) < 24:
        raise MalformedCapture("truncated global header")
    if blob[:4] == b"\xd4\xc3\xb2\xa1":
        endian = "<"
    elif blob[:4] == b"\xa1\xb2\xc3\xd4":
        endian = ">"
    else:
        raise MalformedCapture(f"bad magic {blob[:4].hex()}")
    (network,) = struct.unpack_from(endian + "I", blob, 20)

    records: list[PacketRecord] = []
    skipped = 0
    offset = 24
    while offset + 16 <= len(blob):
        ts_sec, ts_usec, incl_len, _orig_len = struct.unpack_from(
            endian + "IIII", blob, offset)
        offset += 16
        if offset + incl_len > len(blob):
            skipped += 1
            log.warning("truncated packet body at offset %d; stopping", offset)
            break
        frame = blob[offset:offset + incl_len]
        offset += incl_len
        timestamp = ts_sec + ts_usec / 1e6

        if network == LINKTYPE_ETHERNET:
            if len(frame) < 14:
                skipped += 1
                continue
            ethertype = int.from_bytes(frame[12:14], "big")
            if ethertype not in (0x0800, 0x86DD):
                skipped += 1
                continue
            record = decode_ip_packet(frame[14:], timestamp, "ethernet")
        elif network == LINKTYPE_RAW_IP:
            record = decode_ip_packet(frame, timestamp, "raw-ip")
        else:
            skipped += 1
            continue

        if record is None:
            skipped += 1
            continue
        records.append(record)
        if limit is not None and len(records) >= limit:
            break
    if skipped:
        log.warning("skipped %d unparseable packet(s) in %s", skipped, path)
    return records
