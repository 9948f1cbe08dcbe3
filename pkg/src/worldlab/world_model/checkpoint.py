"""Checkpoint container: model config + named tensors in one file.

Layout: magic "WMCK" | u32 version LE | u64 header length LE | compact JSON
header (config, tensor name -> shape table, metadata) | tensor payload as
32-bit little-endian floats in header (sorted-name) order | u32 CRC-32 of
the payload. Malformed containers raise FormatError naming what broke;
tensors inconsistent with the stored config raise CheckpointError naming
the tensor.
"""

import json
import struct
import zlib

import numpy as np

from ..errors import CheckpointError, FormatError
from ..numerics import parameter
from .config import ModelConfig
from .params import check_params, param_shapes

MAGIC = b"WMCK"
VERSION = 1


def save_checkpoint(params, config, path, metadata=None):
    """Write params + config (+ JSON-serializable metadata) to `path`."""
    check_params(params, config)
    names = sorted(param_shapes(config))
    header = {
        "version": VERSION,
        "config": config.to_dict(),
        "tensors": {name: list(params[name].shape) for name in names},
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(params[name].data, dtype="<f4").tobytes() for name in names
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config, metadata)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20:
        raise FormatError(f"checkpoint is {len(blob)} bytes, too short for a header")
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    if 16 + header_len + 4 > len(blob):
        raise FormatError(f"header length {header_len} exceeds file size {len(blob)}")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FormatError(f"header is not valid JSON: {err}") from err
    for key in ("version", "config", "tensors", "metadata"):
        if key not in header:
            raise FormatError(f"header missing field {key!r}")

    config = ModelConfig.from_dict(header["config"])
    expected = param_shapes(config)
    names = sorted(header["tensors"])
    if names != sorted(expected):
        odd = sorted(set(names) ^ set(expected))
        raise CheckpointError(f"tensor table does not match config: {odd[0]}")
    for name in names:
        if tuple(header["tensors"][name]) != expected[name]:
            raise CheckpointError(
                f"tensor {name} stored with shape {tuple(header['tensors'][name])}, "
                f"config implies {expected[name]}"
            )

    sizes = {name: int(np.prod(expected[name], dtype=np.int64)) for name in names}
    payload_len = 4 * sum(sizes.values())
    want = 16 + header_len + payload_len + 4
    if len(blob) != want:
        raise FormatError(f"checkpoint is {len(blob)} bytes, header implies {want}")
    payload = blob[16 + header_len : 16 + header_len + payload_len]
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    actual_crc = zlib.crc32(payload)
    if stored_crc != actual_crc:
        raise FormatError(
            f"payload checksum mismatch: stored 0x{stored_crc:08x}, computed 0x{actual_crc:08x}"
        )

    params = {}
    offset = 0
    for name in names:
        nbytes = 4 * sizes[name]
        flat = np.frombuffer(payload[offset : offset + nbytes], dtype="<f4")
        params[name] = parameter(name, flat.reshape(expected[name]).astype(np.float32))
        offset += nbytes
    return params, config, header["metadata"]
