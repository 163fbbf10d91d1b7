"""Binary checkpoint container.

Layout: magic "TAONET" | format version (u32 LE) | component tag
(u8 length + utf-8) | shapes manifest (u32 LE length + JSON) | payload of
little-endian 32-bit floats, concatenated in manifest order. The manifest
carries array names/shapes plus free-form training metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CorruptPayload, VersionMismatch

MAGIC = b"TAONET"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    version: int
    component: str  # "detector" | "classifier"
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, component: str, arrays: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    manifest = {
        "arrays": [{"name": name, "shape": list(a.shape)}
                   for name, a in arrays.items()],
        "meta": meta or {},
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    tag_bytes = component.encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                       for a in arrays.values())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", len(tag_bytes)))
        fh.write(tag_bytes)
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        raise CorruptPayload("not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, "
                              f"supported {FORMAT_VERSION}")
    try:
        (tag_len,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        component = blob[offset:offset + tag_len].decode("utf-8")
        offset += tag_len
        (manifest_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        manifest = json.loads(blob[offset:offset + manifest_len].decode("utf-8"))
        offset += manifest_len
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"unreadable checkpoint header: {exc}") from exc

    entries = manifest.get("arrays", [])
    expected = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in entries)
    payload = blob[offset:]
    if len(payload) != expected * 4:
        raise CorruptPayload(
            f"payload holds {len(payload) // 4} floats, manifest requires {expected}"
        )
    arrays: dict[str, np.ndarray] = {}
    cursor = 0
    for entry in entries:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        flat = np.frombuffer(payload, dtype="<f4", count=count, offset=cursor * 4)
        arrays[entry["name"]] = flat.reshape(entry["shape"]).copy()
        cursor += count
    return Checkpoint(version=version, component=component, arrays=arrays,
                      meta=manifest.get("meta", {}))
