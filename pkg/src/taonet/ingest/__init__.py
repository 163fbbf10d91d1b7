"""Packet capture parsing, tokenization, datasets, and synthetic corpora."""

from .dataset import (
    PAD_TOKEN,
    SPLIT_NAMES,
    VOCAB_SIZE,
    Dataset,
    LabelSpace,
    TrafficSample,
    derive_label_space,
    load_dataset,
    split_dataset,
    write_dataset,
)
from .pcap import PacketRecord, decode_ip_packet, parse_pcap
from .synthetic import default_spec, generate_synthetic, validate_spec
from .tokenize import anonymize_packet_bytes, record_from_sample, tokenize_packet

__all__ = [
    "Dataset", "LabelSpace", "PAD_TOKEN", "PacketRecord", "SPLIT_NAMES",
    "TrafficSample", "VOCAB_SIZE", "anonymize_packet_bytes", "decode_ip_packet",
    "default_spec", "derive_label_space", "generate_synthetic", "load_dataset",
    "parse_pcap", "record_from_sample", "split_dataset", "tokenize_packet",
    "validate_spec", "write_dataset",
]
