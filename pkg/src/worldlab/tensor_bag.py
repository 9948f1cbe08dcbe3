"""A minimal named-tensor container for auxiliary models.

Layout: magic "WMTB", u32 version, u64 header length, a compact JSON header
(tensor name -> shape, plus free-form metadata), float32 payloads in sorted
name order, and a CRC-32 of the payload bytes. The pose predictor and the
frame discriminator persist through this; the world model itself uses the
richer .wmc format that also carries its config.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .errors import CheckpointError, FormatError

MAGIC = b"WMTB"
VERSION = 1


def save_tensor_bag(tensors, path, metadata=None):
    """Write name -> array (any float dtype, stored as float32)."""
    names = sorted(tensors)
    header = {
        "version": VERSION,
        "tensors": {name: list(tensors[name].shape) for name in names},
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(tensors[name], dtype="<f4").tobytes() for name in names
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_tensor_bag(path):
    """Read a bag back into (tensors, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FormatError(f"file too short to be a tensor bag ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack("<IQ", raw[4:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported tensor bag version {version}, expected {VERSION}")
    if 16 + header_len + 4 > len(raw):
        raise FormatError(f"header length {header_len} exceeds file size {len(raw)}")
    try:
        header = json.loads(raw[16 : 16 + header_len])
    except json.JSONDecodeError as exc:
        raise FormatError(f"tensor bag header is not valid JSON: {exc}") from exc
    for key in ("version", "tensors", "metadata"):
        if key not in header:
            raise FormatError(f"tensor bag header missing {key!r}")
    shapes = {name: tuple(shape) for name, shape in header["tensors"].items()}
    total = sum(int(np.prod(shape, dtype=np.int64)) for shape in shapes.values())
    expected = 16 + header_len + 4 * total + 4
    if len(raw) != expected:
        raise FormatError(f"tensor bag is {len(raw)} bytes, header implies {expected}")
    payload = raw[16 + header_len : -4]
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    computed = zlib.crc32(payload)
    if stored_crc != computed:
        raise FormatError(
            f"payload checksum mismatch: stored 0x{stored_crc:08x}, computed 0x{computed:08x}"
        )
    tensors = {}
    offset = 0
    for name in sorted(shapes):
        count = int(np.prod(shapes[name], dtype=np.int64))
        flat = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = flat.reshape(shapes[name]).copy()
        offset += 4 * count
    return tensors, header["metadata"]
