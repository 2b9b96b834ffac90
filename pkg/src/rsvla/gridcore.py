"""Dense grid containers and the low-level spatial operations everything else composes.

All math is done in 64-bit floats; grids are (H, W, C) row-major,
channel-minor arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVectorError, GridBoundsError, ShapeError


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle in cell coordinates, half-open [row0,row1) x [col0,col1)."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if self.row0 < 0 or self.col0 < 0:
            raise ValueError(f"negative roi origin: {self}")
        if self.row1 <= self.row0 or self.col1 <= self.col0:
            raise ValueError(f"empty roi: {self}")

    @property
    def height(self) -> int:
        return self.row1 - self.row0

    @property
    def width(self) -> int:
        return self.col1 - self.col0

    @property
    def area(self) -> int:
        return self.height * self.width

    def scaled(self, factor: int) -> "Roi":
        return Roi(self.row0 * factor, self.col0 * factor,
                   self.row1 * factor, self.col1 * factor)


@dataclass(frozen=True)
class FeatureGrid:
    """Dense H x W x C grid of finite float64 values."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"grid must be (H, W, C), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"grid dims must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def constant(cls, h: int, w: int, c: int, value: float = 0.0) -> "FeatureGrid":
        return cls(np.full((h, w, c), float(value)))

    def full_roi(self) -> Roi:
        return Roi(0, 0, self.height, self.width)


@dataclass(frozen=True)
class EmbedVec:
    """d-dimensional vector in the shared alignment space."""

    values: np.ndarray
    normalized: bool = field(default=False, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 1 or arr.size < 1:
            raise ShapeError(f"embedding must be a nonempty 1-D vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite values")
        if self.normalized and abs(np.linalg.norm(arr) - 1.0) > 1e-9:
            raise ValueError("vector tagged normalized but norm != 1")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size


def as_vector(v) -> np.ndarray:
    """Accept EmbedVec or anything array-like, return a float64 1-D array."""
    if isinstance(v, EmbedVec):
        return v.values
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected 1-D vector, got shape {arr.shape}")
    return arr


def bilinear_upsample(grid: FeatureGrid, factor: int) -> FeatureGrid:
    """Upsample by an integer factor with align-corners-false sample centers."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return FeatureGrid(grid.data.copy())
    h, w, _ = grid.data.shape

    def axis_weights(n, f):
        src = (np.arange(n * f, dtype=np.float64) + 0.5) / f - 0.5
        src = np.clip(src, 0.0, n - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, fr = axis_weights(h, factor)
    c0, c1, fc = axis_weights(w, factor)

    rows = (1.0 - fr)[:, None, None] * grid.data[r0] + fr[:, None, None] * grid.data[r1]
    out = (1.0 - fc)[None, :, None] * rows[:, c0] + fc[None, :, None] * rows[:, c1]
    return FeatureGrid(out)


def crop(grid: FeatureGrid, roi: Roi) -> FeatureGrid:
    if roi.row1 > grid.height or roi.col1 > grid.width:
        raise GridBoundsError(f"roi {roi} outside {grid.height}x{grid.width} grid")
    return FeatureGrid(grid.data[roi.row0:roi.row1, roi.col0:roi.col1].copy())


def pool(grid: FeatureGrid, out_h: int, out_w: int, mode: str = "average") -> FeatureGrid:
    """Adaptive pooling; bin b covers rows floor(b*H/out_h) .. floor((b+1)*H/out_h)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be positive")
    if out_h > grid.height or out_w > grid.width:
        raise ValueError("pooled dims must not exceed input dims")
    if mode not in ("average", "max"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    h, w, c = grid.data.shape
    out = np.empty((out_h, out_w, c))
    reducer = np.mean if mode == "average" else np.max
    for br in range(out_h):
        r0, r1 = (br * h) // out_h, ((br + 1) * h) // out_h
        for bc in range(out_w):
            c0, c1 = (bc * w) // out_w, ((bc + 1) * w) // out_w
            out[br, bc] = reducer(grid.data[r0:r1, c0:c1], axis=(0, 1))
    return FeatureGrid(out)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps, radius ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.abs(idx) % period
    return np.where(m >= n, period - m, m)


def gaussian_blur(grid: FeatureGrid, sigma: float) -> FeatureGrid:
    """Separable Gaussian convolution with reflect-edge padding, per channel."""
    kernel = gaussian_kernel(sigma)
    radius = (kernel.size - 1) // 2
    h, w, _ = grid.data.shape

    row_idx = _reflect_indices(np.arange(-radius, h + radius), h)
    col_idx = _reflect_indices(np.arange(-radius, w + radius), w)

    padded = grid.data[row_idx]
    tmp = np.zeros_like(grid.data)
    for t in range(kernel.size):
        tmp += kernel[t] * padded[t:t + h]
    padded = tmp[:, col_idx]
    out = np.zeros_like(grid.data)
    for t in range(kernel.size):
        out += kernel[t] * padded[:, t:t + w]
    return FeatureGrid(out)


def l2_normalize(vec) -> EmbedVec:
    v = as_vector(vec)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DegenerateVectorError("cannot normalize a zero vector")
    return EmbedVec(v / norm, normalized=True)


def layer_norm(vec, eps: float = 1e-5) -> EmbedVec:
    """(x - mean) / sqrt(var + eps), population variance, no learned affine."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    v = as_vector(vec)
    mean = v.mean()
    var = v.var()
    if var + eps == 0.0:
        # constant input with eps 0: define the output as all zeros
        return EmbedVec(np.zeros_like(v))
    return EmbedVec((v - mean) / np.sqrt(var + eps))
