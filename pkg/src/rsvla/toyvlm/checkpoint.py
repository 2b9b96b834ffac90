"""TVLM checkpoint format.

Layout (all integers little-endian):
  magic "TVLM" (4 bytes)
  u32 version
  u32 group count
  per group:
    u16 name length, UTF-8 name bytes
    u32 ndim, u32 per dimension
    float32 payload, C order
    u64 checksum = CRC-32 of the payload bytes, zero-extended
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Dict

import numpy as np

MAGIC = b"TVLM"
VERSION = 1


def save_checkpoint(path, params: Dict[str, np.ndarray]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(params))
    for name, arr in params.items():
        payload = np.ascontiguousarray(arr, dtype=np.float32).tobytes()
        name_b = name.encode("utf-8")
        buf += struct.pack("<H", len(name_b)) + name_b
        shape = np.asarray(arr).shape
        buf += struct.pack("<I", len(shape))
        for dim in shape:
            buf += struct.pack("<I", dim)
        buf += payload
        buf += struct.pack("<Q", zlib.crc32(payload))
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("not a TVLM checkpoint (bad magic)")
    off = 4
    version, count = struct.unpack_from("<II", raw, off)
    off += 8
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off) if ndim else ()
        off += 4 * ndim
        n_items = int(np.prod(shape)) if shape else 1
        payload = raw[off:off + 4 * n_items]
        off += 4 * n_items
        (stored,) = struct.unpack_from("<Q", raw, off)
        off += 8
        if zlib.crc32(payload) != stored:
            raise ValueError(f"checksum mismatch for group {name!r}")
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if off != len(raw):
        raise ValueError("trailing bytes after last checkpoint group")
    return params
