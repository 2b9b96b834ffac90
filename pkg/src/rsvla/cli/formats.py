"""FGRD grid serialization.

Layout: magic "FGRD" (4 bytes), little-endian u32 H, W, C, then H*W*C
little-endian float32 values, row-major channel-minor.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..gridcore import FeatureGrid

MAGIC = b"FGRD"


def write_grid(path, grid: FeatureGrid) -> None:
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    header = MAGIC + struct.pack("<III", grid.height, grid.width, grid.channels)
    Path(path).write_bytes(header + payload)


def read_grid(path) -> FeatureGrid:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an FGRD grid (bad magic)")
    h, w, c = struct.unpack_from("<III", raw, 4)
    expected = 16 + 4 * h * w * c
    if len(raw) != expected:
        raise ValueError(f"{path}: payload length {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(h, w, c)
    return FeatureGrid(data.astype(np.float64))
