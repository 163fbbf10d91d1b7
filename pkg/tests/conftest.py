"""Shared fixtures: network guard, packet builders, small datasets."""

from __future__ import annotations

import socket
import struct

import pytest

from taonet.config import RunConfig
from taonet.ingest import default_spec, generate_synthetic, write_dataset


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """The whole suite must pass with networking disabled."""

    def deny(*args, **kwargs):
        raise RuntimeError("network access attempted during tests")

    monkeypatch.setattr(socket.socket, "connect", deny)
    monkeypatch.setattr(socket.socket, "connect_ex", deny)
    yield


def build_ipv4_packet(payload: bytes = b"\x00" * 20, transport: str = "tcp",
                      src_ip: bytes = b"\x0a\x00\x00\x01",
                      dst_ip: bytes = b"\x0a\x00\x00\x02",
                      src_port: int = 12345, dst_port: int = 443,
                      ttl: int = 64, flags: int = 0x18, window: int = 65535,
                      ip_checksum: int = 0xBEEF,
                      transport_checksum: int = 0xCAFE) -> bytes:
    """Hand-assembled IPv4 packet starting at the IP header."""
    proto = 6 if transport == "tcp" else 17
    transport_len = 20 if transport == "tcp" else 8
    total = 20 + transport_len + len(payload)
    header = bytearray(20)
    header[0] = 0x45
    header[2:4] = total.to_bytes(2, "big")
    header[4:6] = (0x1234).to_bytes(2, "big")
    header[6:8] = (0x4000).to_bytes(2, "big")
    header[8] = ttl
    header[9] = proto
    header[10:12] = ip_checksum.to_bytes(2, "big")
    header[12:16] = src_ip
    header[16:20] = dst_ip
    if transport == "tcp":
        seg = bytearray(20)
        seg[0:2] = src_port.to_bytes(2, "big")
        seg[2:4] = dst_port.to_bytes(2, "big")
        seg[4:8] = (1000).to_bytes(4, "big")
        seg[8:12] = (2000).to_bytes(4, "big")
        seg[12] = 5 << 4
        seg[13] = flags
        seg[14:16] = window.to_bytes(2, "big")
        seg[16:18] = transport_checksum.to_bytes(2, "big")
    else:
        seg = bytearray(8)
        seg[0:2] = src_port.to_bytes(2, "big")
        seg[2:4] = dst_port.to_bytes(2, "big")
        seg[4:6] = (8 + len(payload)).to_bytes(2, "big")
        seg[6:8] = transport_checksum.to_bytes(2, "big")
    return bytes(header) + bytes(seg) + payload


def build_pcap(packets: list[bytes], endian: str = "<", network: int = 101,
               ts: float = 1.5) -> bytes:
    """Classic capture file from raw packet byte strings."""
    magic = struct.pack(endian + "I", 0xA1B2C3D4)
    header = magic + struct.pack(endian + "HHiIII", 2, 4, 0, 0, 65535, network)
    body = b""
    for i, pkt in enumerate(packets):
        sec = int(ts) + i
        usec = int((ts % 1) * 1e6)
        body += struct.pack(endian + "IIII", sec, usec, len(pkt), len(pkt)) + pkt
    return header + body


@pytest.fixture
def tcp_packet_bytes() -> bytes:
    return build_ipv4_packet()  # 20 IP + 20 TCP + 20 payload = 60 bytes


@pytest.fixture(scope="session")
def tiny_spec() -> dict:
    spec = default_spec()
    spec["j"] = 64
    return spec


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec):
    return generate_synthetic(tiny_spec, 60, seed=42)


@pytest.fixture(scope="session")
def tiny_dataset_path(tiny_dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.jsonl"
    write_dataset(tiny_dataset, path)
    return path


def tiny_config(dataset_path, out_dir, **overrides) -> RunConfig:
    base = dict(dataset=str(dataset_path), out_dir=str(out_dir), j=64, d=16,
                d_in=8, layers=2, heads=2, extractor_epochs=2,
                classifier_epochs=2, backend="mock-oracle")
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def trained_bundle(tiny_dataset, tmp_path_factory):
    """A small calibrated bundle shared by stage-two tests."""
    from taonet import pipeline

    config = tiny_config("unused", tmp_path_factory.mktemp("runs"))
    bundle = pipeline.train_bundle(tiny_dataset, config)
    pipeline.calibrate_bundle(bundle, tiny_dataset, config)
    return bundle, config
