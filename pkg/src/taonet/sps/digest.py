"""Structured packet summaries injected into prompts.

The digest condenses what an analyst would read off a packet: transport
behavior (TCP flags, window), structure (lengths, fragmentation), payload
statistics (byte entropy, printable fraction), and a short hex preview of
the anonymized bytes. Payload statistics are computed over the payload
region of the non-pad tokens, so headers do not pollute them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest.dataset import PAD_TOKEN, TrafficSample
from ..ingest.pcap import PacketRecord

HEX_PREVIEW_BYTES = 32


@dataclass
class FeatureDigest:
    transport: str
    tcp_flag_names: list[str]
    tcp_window: int | None
    total_length: int
    payload_length: int
    fragmented: bool
    byte_entropy: float        # bits per byte, in [0, 8]
    printable_fraction: float  # in [0, 1]
    hex_preview: str           # first 32 anonymized bytes

    def lines(self, extra: dict | None = None) -> list[str]:
        flags = ",".join(self.tcp_flag_names) if self.tcp_flag_names else "none"
        window = "n/a" if self.tcp_window is None else str(self.tcp_window)
        rows = [
            f"transport: {self.transport}",
            f"tcp_flags: {flags}",
            f"tcp_window: {window}",
            f"total_length: {self.total_length}",
            f"payload_length: {self.payload_length}",
            f"fragmented: {'yes' if self.fragmented else 'no'}",
            f"byte_entropy: {self.byte_entropy:.2f}",
            f"printable_fraction: {self.printable_fraction:.2f}",
            f"hex_preview: {self.hex_preview}",
        ]
        for key, value in (extra or {}).items():
            rows.append(f"{key}: {value}")
        return rows

    def render(self, extra: dict | None = None) -> str:
        return "\n".join(self.lines(extra))


def shannon_entropy(values: np.ndarray) -> float:
    """Entropy in bits of the byte histogram; 0.0 for empty input."""
    if values.size == 0:
        return 0.0
    counts = np.bincount(values.astype(np.int64), minlength=256)[:256]
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum())


def _header_span(record: PacketRecord) -> int:
    ip_len = (record.raw_bytes[0] & 0x0F) * 4 if record.ip_version == 4 else 40
    if record.transport == "tcp":
        offset_byte = record.raw_bytes[ip_len + 12]
        return ip_len + (offset_byte >> 4) * 4
    if record.transport == "udp":
        return ip_len + 8
    return ip_len


def _is_fragmented(record: PacketRecord) -> bool:
    if record.ip_version != 4 or len(record.raw_bytes) < 8:
        return False
    flags_frag = int.from_bytes(record.raw_bytes[6:8], "big")
    more_fragments = bool(flags_frag & 0x2000)
    fragment_offset = flags_frag & 0x1FFF
    return more_fragments or fragment_offset > 0


def build_digest(record: PacketRecord, sample: TrafficSample) -> FeatureDigest:
    """Deterministic digest of one packet/sample pair."""
    tokens = np.asarray(sample.tokens)
    non_pad = tokens[tokens != PAD_TOKEN]
    payload = non_pad[_header_span(record):]
    printable = 0.0
    if payload.size:
        printable = float(((payload >= 32) & (payload <= 126)).mean())
    preview = non_pad[:HEX_PREVIEW_BYTES].astype(np.uint8).tobytes().hex()
    return FeatureDigest(
        transport=record.transport,
        tcp_flag_names=record.flag_names(),
        tcp_window=record.tcp_window,
        total_length=record.total_length,
        payload_length=record.payload_length,
        fragmented=_is_fragmented(record),
        byte_entropy=shannon_entropy(payload),
        printable_fraction=printable,
        hex_preview=preview,
    )
