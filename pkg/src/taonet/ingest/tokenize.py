"""Byte-level tokenization with address/checksum anonymization.

Tokens are the first j bytes of a packet starting at the IP header, one
token per byte, right-padded with the pad token. Source/destination
addresses and IP/TCP/UDP checksums are zeroed first so that token
sequences cannot memorize endpoints.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .dataset import PAD_TOKEN, TrafficSample
from .pcap import PacketRecord, decode_ip_packet


def anonymize_packet_bytes(data: bytes) -> bytes:
    """Zero addresses and checksums; returns a new byte string."""
    buf = bytearray(data)
    if not buf:
        return bytes(buf)
    version = buf[0] >> 4

    def zero(start: int, end: int) -> None:
        end = min(end, len(buf))
        if start < end:
            buf[start:end] = b"\x00" * (end - start)

    if version == 4:
        ihl = (buf[0] & 0x0F) * 4
        zero(10, 12)   # header checksum
        zero(12, 20)   # source + destination address
        proto = buf[9] if len(buf) > 9 else None
        header_end = ihl
    elif version == 6:
        zero(8, 40)    # source + destination address
        proto = buf[6] if len(buf) > 6 else None
        header_end = 40
    else:
        return bytes(buf)

    if proto == 6:
        zero(header_end + 16, header_end + 18)  # TCP checksum
    elif proto == 17:
        zero(header_end + 6, header_end + 8)    # UDP checksum
    return bytes(buf)


def tokenize_packet(record: PacketRecord, j: int, sample_id: str | None = None,
                    label: str | None = None,
                    origin: str = "pcap") -> TrafficSample:
    """Fixed-length token sequence for one packet."""
    if j < 1:
        raise ValueError("token length j must be >= 1")
    data = anonymize_packet_bytes(record.raw_bytes)[:j]
    tokens = np.full(j, PAD_TOKEN, dtype=np.uint16)
    tokens[:len(data)] = np.frombuffer(data, dtype=np.uint8)
    if sample_id is None:
        digest = hashlib.sha256(tokens.tobytes() + repr(record.timestamp).encode())
        sample_id = digest.hexdigest()[:16]
    return TrafficSample(id=sample_id, tokens=tokens, label=label, origin=origin)


def record_from_sample(sample: TrafficSample) -> PacketRecord | None:
    """Re-decode a sample's token bytes as an (anonymized) IP packet.

    Samples from JSONL or the synthetic generator carry no capture record;
    their tokens are anonymized packet bytes, so header structure can be
    recovered directly. Returns None when the bytes do not decode.
    """
    tokens = np.asarray(sample.tokens)
    non_pad = tokens[tokens != PAD_TOKEN]
    data = non_pad.astype(np.uint8).tobytes()
    return decode_ip_packet(data, timestamp=0.0, link_type="raw-ip")
