"""Deterministic synthetic packet corpus generator.

Every class is a packet template: transport header fields plus payload
byte-value and length distributions. ID classes populate all three splits
(per the spec's valid/test fractions); OOD classes are generated only for
valid/test, with per-split counts derived from the 7:3 ID:OOD mix rule
(floor on the OOD share). Output is a pure function of (spec, n, seed).
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ..errors import InvalidSpec
from .dataset import Dataset, LabelSpace, TrafficSample
from .pcap import decode_ip_packet
from .tokenize import tokenize_packet

DEFAULT_VALID_FRACTION = 0.15
DEFAULT_TEST_FRACTION = 0.15
DEFAULT_J = 128

_PRINTABLE = np.arange(32, 127, dtype=np.uint8)


def default_spec() -> dict:
    """The synthetic spec shipped with the package."""
    text = resources.files("taonet.resources").joinpath(
        "synthetic_spec.json").read_text("utf-8")
    return json.loads(text)


def _checksum16(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(int.from_bytes(data[i:i + 2], "big") for i in range(0, len(data), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def _validate_distribution(dist: dict, what: str, upper: int) -> None:
    kind = dist.get("kind")
    if kind == "uniform":
        low, high = dist.get("low"), dist.get("high")
        if low is None or high is None or low > high or low < 0 or high > upper:
            raise InvalidSpec(f"degenerate uniform {what} distribution: {dist}")
    elif kind == "fixed":
        value = dist.get("value")
        if value is None or not 0 <= value <= upper:
            raise InvalidSpec(f"degenerate fixed {what} distribution: {dist}")
    elif kind == "choice":
        values = dist.get("values")
        if not values or any(not 0 <= v <= upper for v in values):
            raise InvalidSpec(f"degenerate choice {what} distribution: {dist}")
        weights = dist.get("weights")
        if weights is not None and (len(weights) != len(values)
                                    or any(w <= 0 for w in weights)):
            raise InvalidSpec(f"invalid weights in {what} distribution: {dist}")
    elif kind == "text" and what == "payload":
        pass
    else:
        raise InvalidSpec(f"unknown {what} distribution kind: {kind!r}")


def validate_spec(spec: dict) -> None:
    classes = spec.get("classes")
    if not classes:
        raise InvalidSpec("spec defines no classes")
    names = [c.get("name") for c in classes]
    if len(set(names)) != len(names) or any(not n for n in names):
        raise InvalidSpec("class names must be unique and non-empty")
    roles = [c.get("role") for c in classes]
    if any(r not in ("id", "ood") for r in roles):
        raise InvalidSpec("every class role must be 'id' or 'ood'")
    if roles.count("id") < 2 or roles.count("ood") < 1:
        raise InvalidSpec("spec needs >= 2 ID classes and >= 1 OOD class")
    for cls in classes:
        if cls.get("transport", "tcp") not in ("tcp", "udp"):
            raise InvalidSpec(f"unsupported transport in class {cls['name']}")
        _validate_distribution(cls.get("payload", {}), "payload", 255)
        _validate_distribution(cls.get("length", {}), "length", 65000)
    for key, default in (("valid_fraction", DEFAULT_VALID_FRACTION),
                         ("test_fraction", DEFAULT_TEST_FRACTION)):
        value = spec.get(key, default)
        if not 0 < value < 1:
            raise InvalidSpec(f"{key} must lie in (0, 1)")
    if spec.get("valid_fraction", DEFAULT_VALID_FRACTION) + \
            spec.get("test_fraction", DEFAULT_TEST_FRACTION) >= 1:
        raise InvalidSpec("valid and test fractions must sum below 1")
    if spec.get("j", DEFAULT_J) < 1:
        raise InvalidSpec("token length j must be >= 1")


def _draw(dist: dict, size: int, rng: np.random.Generator) -> np.ndarray:
    kind = dist["kind"]
    if kind == "uniform":
        return rng.integers(dist["low"], dist["high"] + 1, size=size)
    if kind == "fixed":
        return np.full(size, dist["value"], dtype=np.int64)
    if kind == "choice":
        values = np.asarray(dist["values"])
        weights = dist.get("weights")
        p = None
        if weights is not None:
            p = np.asarray(weights, dtype=np.float64)
            p = p / p.sum()
        return rng.choice(values, size=size, p=p)
    if kind == "text":
        return rng.choice(_PRINTABLE, size=size)
    raise InvalidSpec(f"unknown distribution kind {kind!r}")


def _build_packet(cls: dict, rng: np.random.Generator) -> bytes:
    transport = cls.get("transport", "tcp")
    payload_len = int(_draw(cls["length"], 1, rng)[0])
    payload = _draw(cls["payload"], payload_len, rng).astype(np.uint8).tobytes()
    transport_len = 20 if transport == "tcp" else 8
    total_length = 20 + transport_len + len(payload)

    src_ip = rng.integers(0, 256, size=4, dtype=np.int64)
    dst_ip = rng.integers(0, 256, size=4, dtype=np.int64)
    ident = int(rng.integers(0, 65536))
    header = bytearray(20)
    header[0] = 0x45
    header[2:4] = total_length.to_bytes(2, "big")
    header[4:6] = ident.to_bytes(2, "big")
    header[6:8] = (0x4000).to_bytes(2, "big")  # don't fragment
    header[8] = cls.get("ttl", 64)
    header[9] = 6 if transport == "tcp" else 17
    header[12:16] = bytes(int(b) for b in src_ip)
    header[16:20] = bytes(int(b) for b in dst_ip)
    header[10:12] = _checksum16(bytes(header)).to_bytes(2, "big")

    src_port = cls.get("src_port")
    if src_port is None:
        src_port = int(rng.integers(32768, 61000))
    dst_port = cls.get("dst_port", 443)
    if transport == "tcp":
        seq = int(rng.integers(0, 2 ** 32))
        ack = int(rng.integers(0, 2 ** 32))
        tcp = bytearray(20)
        tcp[0:2] = src_port.to_bytes(2, "big")
        tcp[2:4] = dst_port.to_bytes(2, "big")
        tcp[4:8] = seq.to_bytes(4, "big")
        tcp[8:12] = ack.to_bytes(4, "big")
        tcp[12] = 5 << 4
        tcp[13] = cls.get("flags", 0x18)  # PSH|ACK
        tcp[14:16] = cls.get("window", 65535).to_bytes(2, "big")
        tcp[16:18] = int(rng.integers(0, 65536)).to_bytes(2, "big")
        segment = bytes(tcp)
    else:
        udp = bytearray(8)
        udp[0:2] = src_port.to_bytes(2, "big")
        udp[2:4] = dst_port.to_bytes(2, "big")
        udp[4:6] = (8 + len(payload)).to_bytes(2, "big")
        udp[6:8] = int(rng.integers(0, 65536)).to_bytes(2, "big")
        segment = bytes(udp)
    return bytes(header) + segment + payload


def _ood_share(id_count: int) -> int:
    """OOD samples for a split holding `id_count` ID samples (7:3, floored)."""
    return (3 * id_count) // 7


def generate_synthetic(spec: dict, n_per_class: int, seed: int) -> Dataset:
    """Build a labeled dataset; see module docstring for split arithmetic."""
    validate_spec(spec)
    if n_per_class < 1:
        raise InvalidSpec("n_per_class must be >= 1")
    j = spec.get("j", DEFAULT_J)
    valid_fraction = spec.get("valid_fraction", DEFAULT_VALID_FRACTION)
    test_fraction = spec.get("test_fraction", DEFAULT_TEST_FRACTION)

    id_classes = [c for c in spec["classes"] if c["role"] == "id"]
    ood_classes = [c for c in spec["classes"] if c["role"] == "ood"]
    v_per_class = int(n_per_class * valid_fraction)
    t_per_class = int(n_per_class * test_fraction)
    train_per_class = n_per_class - v_per_class - t_per_class

    ood_valid_total = _ood_share(len(id_classes) * v_per_class)
    ood_test_total = _ood_share(len(id_classes) * t_per_class)

    def spread(total: int, buckets: int) -> list[int]:
        base, extra = divmod(total, buckets)
        return [base + (1 if i < extra else 0) for i in range(buckets)]

    ood_valid = spread(ood_valid_total, len(ood_classes))
    ood_test = spread(ood_test_total, len(ood_classes))

    rng = np.random.Generator(np.random.PCG64(seed))
    samples: list[TrafficSample] = []
    splits: dict[str, str] = {}

    def emit(cls: dict, count: int, split_name: str, start: int) -> int:
        for i in range(count):
            packet = _build_packet(cls, rng)
            record = decode_ip_packet(packet)
            if record is None:
                raise InvalidSpec(f"class {cls['name']} produced an unparseable packet")
            sample_id = f"{cls['name']}-{start + i:05d}"
            sample = tokenize_packet(record, j, sample_id=sample_id,
                                     label=cls["name"], origin="synthetic")
            samples.append(sample)
            splits[sample_id] = split_name
        return start + count

    for cls in id_classes:
        cursor = emit(cls, train_per_class, "train", 0)
        cursor = emit(cls, v_per_class, "valid", cursor)
        emit(cls, t_per_class, "test", cursor)
    for cls, n_valid, n_test in zip(ood_classes, ood_valid, ood_test):
        cursor = emit(cls, n_valid, "valid", 0)
        emit(cls, n_test, "test", cursor)

    label_space = LabelSpace(tuple(c["name"] for c in id_classes),
                             tuple(c["name"] for c in ood_classes))
    return Dataset(samples=samples, label_space=label_space, splits=splits)
