"""Trajectory container (.wmt): a self-describing binary file holding a
list of trajectories plus the engine constants they were produced with.

Layout: magic "WMTR", u32 format version, u64 header length, compact JSON
header with sorted keys, then per-trajectory payload (frames u8, actions
i8, states f32, all little-endian, C order), then a CRC-32 of the payload
section.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .engine import engine_config
from .types import Trajectory

MAGIC = b"WMTR"
VERSION = 1


def _header_dict(trajectories, extra_meta):
    first = trajectories[0]
    header = {
        "version": VERSION,
        "trajectory_count": len(trajectories),
        "lengths": [len(t) for t in trajectories],
        "frame_shape": list(first.frames.shape[1:]),
        "action_dim": int(first.actions.shape[1]),
        "state_dim": int(first.states.shape[1]),
        "map_seeds": [int(t.map_seed) for t in trajectories],
        "engine": engine_config(),
        "meta": extra_meta or {},
    }
    return header


def save_dataset(path, trajectories, extra_meta=None):
    """Write trajectories to a .wmt file and return the header dict."""
    if not trajectories:
        raise FormatError("cannot save an empty trajectory list")
    frame_shape = trajectories[0].frames.shape[1:]
    for i, traj in enumerate(trajectories):
        if traj.frames.shape[1:] != frame_shape:
            raise FormatError(
                f"trajectory {i} frame shape {traj.frames.shape[1:]} differs from {frame_shape}"
            )
    header = _header_dict(trajectories, extra_meta)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = bytearray()
    for traj in trajectories:
        payload += np.ascontiguousarray(traj.frames, dtype=np.uint8).tobytes()
        payload += np.ascontiguousarray(traj.actions, dtype=np.int8).tobytes()
        payload += np.ascontiguousarray(traj.states, dtype="<f4").tobytes()
    blob = bytearray()
    blob += MAGIC
    blob += np.uint32(VERSION).tobytes()
    blob += np.uint64(len(header_bytes)).tobytes()
    blob += header_bytes
    blob += payload
    blob += np.uint32(zlib.crc32(bytes(payload)) & 0xFFFFFFFF).tobytes()
    Path(path).write_bytes(bytes(blob))
    return header


def load_dataset(path):
    """Read a .wmt file back into (trajectories, header)."""
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise FormatError(f"file too short to be a trajectory container ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}, expected {VERSION}")
    header_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    header_end = 16 + header_len
    if header_end > len(raw) - 4:
        raise FormatError(f"header length {header_len} exceeds file payload")
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FormatError(f"header is not valid JSON: {err}") from err

    for key in ("trajectory_count", "lengths", "frame_shape", "action_dim", "state_dim", "map_seeds"):
        if key not in header:
            raise FormatError(f"header missing field {key!r}")
    count = header["trajectory_count"]
    lengths = header["lengths"]
    if len(lengths) != count:
        raise FormatError(f"lengths has {len(lengths)} entries, trajectory_count is {count}")
    if len(header["map_seeds"]) != count:
        raise FormatError(f"map_seeds has {len(header['map_seeds'])} entries, trajectory_count is {count}")
    fh, fw, fc = (int(v) for v in header["frame_shape"])
    adim = int(header["action_dim"])
    sdim = int(header["state_dim"])

    per_frame = fh * fw * fc
    expected = sum(length * (per_frame + adim + 4 * sdim) for length in lengths)
    payload = raw[header_end:-4]
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {expected}")
    stored_crc = int(np.frombuffer(raw[-4:], dtype="<u4")[0])
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(f"payload checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")

    trajectories = []
    offset = 0
    for i in range(count):
        length = int(lengths[i])
        nbytes = length * per_frame
        frames = np.frombuffer(payload, dtype=np.uint8, count=nbytes, offset=offset)
        frames = frames.reshape(length, fh, fw, fc).copy()
        offset += nbytes
        actions = np.frombuffer(payload, dtype=np.int8, count=length * adim, offset=offset)
        actions = actions.reshape(length, adim).copy()
        offset += length * adim
        states = np.frombuffer(payload, dtype="<f4", count=length * sdim, offset=offset)
        states = states.astype(np.float32).reshape(length, sdim).copy()
        offset += length * sdim * 4
        meta = dict(header.get("meta", {}))
        trajectories.append(Trajectory(frames, actions, states, int(header["map_seeds"][i]), meta))
    return trajectories, header
