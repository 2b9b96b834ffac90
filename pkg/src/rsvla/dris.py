"""Coarse-to-fine dynamic resolution input strategy.

Allocates per-cell resolution from a saliency map, screens top-k regions of
interest on a blurred attention heatmap, fuses coarse and fine features by
upsample-plus-add, and accounts for the compute savings of the coarse pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import ShapeError
from .gridcore import FeatureGrid, Roi, bilinear_upsample, crop, gaussian_blur, pool

__all__ = [
    "Roi", "ResolutionMask", "DrisConfig", "CostReport", "PipelineResult",
    "resolution_allocate", "select_rois", "fuse_features", "cost_report",
    "run_pipeline", "channel_mean_saliency",
]


@dataclass(frozen=True)
class ResolutionMask:
    """Per-cell binary resolution flag; True marks a high-resolution cell."""

    high: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.high, dtype=bool)
        if arr.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "high", arr)

    @property
    def height(self) -> int:
        return self.high.shape[0]

    @property
    def width(self) -> int:
        return self.high.shape[1]


@dataclass(frozen=True)
class DrisConfig:
    tau_saliency: float = 0.5
    sigma: float = 1.5
    k: int = 4
    n: int = 4
    roi_size: Tuple[int, int] = (4, 4)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("downsampling factor n must be >= 1")
        if self.k < 1:
            raise ValueError("top-k count must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        rh, rw = self.roi_size
        if rh < 1 or rw < 1:
            raise ValueError("roi_size must be positive")


@dataclass(frozen=True)
class CostReport:
    full_res_cell_ops: int
    coarse_cell_ops: int
    fine_cell_ops: int
    savings_ratio: float
    exact_division: bool = True


class PipelineResult(NamedTuple):
    mask: ResolutionMask
    rois: List[Roi]
    fused: FeatureGrid
    cost: CostReport


def _require_single_channel(grid: FeatureGrid, what: str) -> np.ndarray:
    if grid.channels != 1:
        raise ValueError(f"{what} must be single-channel, got C={grid.channels}")
    return grid.data[:, :, 0]


def resolution_allocate(saliency: FeatureGrid, tau_saliency: float) -> ResolutionMask:
    """Cell goes high-resolution iff its saliency score >= tau (ties high)."""
    s = _require_single_channel(saliency, "saliency map")
    return ResolutionMask(s >= tau_saliency)


def select_rois(heatmap: FeatureGrid, cfg: DrisConfig) -> List[Roi]:
    """Blur the heatmap, rank cells, and emit up to k distinct clamped windows.

    Ties in blurred value break by row-major index ascending; duplicate
    rectangles after border clamping collapse, so k bounds the number of
    distinct rectangles returned.
    """
    vals2d = _require_single_channel(gaussian_blur(heatmap, cfg.sigma), "heatmap")
    h, w = vals2d.shape
    rh, rw = cfg.roi_size
    if rh > h or rw > w:
        raise ValueError(f"roi window {cfg.roi_size} larger than {h}x{w} map")

    # stable sort on negated values keeps row-major order for ties
    order = np.argsort(-vals2d.ravel(), kind="stable")
    rois: List[Roi] = []
    seen = set()
    for idx in order:
        r, c = divmod(int(idx), w)
        row0 = min(max(r - rh // 2, 0), h - rh)
        col0 = min(max(c - rw // 2, 0), w - rw)
        rect = (row0, col0, row0 + rh, col0 + rw)
        if rect in seen:
            continue
        seen.add(rect)
        rois.append(Roi(*rect))
        if len(rois) == cfg.k:
            break
    return rois


def fuse_features(coarse: FeatureGrid, fine: FeatureGrid, roi: Roi,
                  factor: int) -> FeatureGrid:
    """Upsample the coarse grid and add the fine crop onto the ROI window.

    The roi is given in coarse cells; the window it covers in the upsampled
    grid is the roi scaled by `factor`, and `fine` must match that window.
    """
    if roi.row1 > coarse.height or roi.col1 > coarse.width:
        raise ShapeError(f"roi {roi} outside coarse grid {coarse.height}x{coarse.width}")
    window = roi.scaled(factor)
    if (fine.height, fine.width) != (window.height, window.width):
        raise ShapeError(
            f"fine grid {fine.height}x{fine.width} does not match roi window "
            f"{window.height}x{window.width}")
    if fine.channels != coarse.channels:
        raise ShapeError("channel mismatch between coarse and fine grids")
    fused = bilinear_upsample(coarse, factor).data
    fused[window.row0:window.row1, window.col0:window.col1] += fine.data
    return FeatureGrid(fused)


def cost_report(h: int, w: int, cfg: DrisConfig, rois: Sequence[Roi]) -> CostReport:
    """Cell-op accounting; `rois` are full-resolution rectangles."""
    full = h * w
    exact = (h % cfg.n == 0) and (w % cfg.n == 0)
    coarse = math.ceil(h / cfg.n) * math.ceil(w / cfg.n)
    fine = sum(r.area for r in rois)
    return CostReport(full, coarse, fine, (coarse + fine) / full, exact)


def channel_mean_saliency(coarse: FeatureGrid) -> FeatureGrid:
    """Default saliency provider: per-cell channel mean of the coarse grid."""
    return FeatureGrid(coarse.data.mean(axis=2, keepdims=True))


def run_pipeline(image: FeatureGrid,
                 saliency_provider: Callable[[FeatureGrid], FeatureGrid],
                 cfg: DrisConfig) -> PipelineResult:
    """Compose allocation, ROI screening, fusion and cost accounting.

    The image is average-pooled by n for the coarse pass; full-resolution
    crops of the input serve as the fine features added onto each selected
    ROI window. ROIs in the result are in coarse-cell coordinates.
    """
    n = cfg.n
    if image.height % n or image.width % n:
        raise ValueError(f"image dims {image.height}x{image.width} not divisible by n={n}")
    coarse = pool(image, image.height // n, image.width // n, "average")
    saliency = saliency_provider(coarse)
    if (saliency.height, saliency.width) != (coarse.height, coarse.width):
        raise ShapeError("saliency dims must match the coarse grid")
    mask = resolution_allocate(saliency, cfg.tau_saliency)
    rois = select_rois(saliency, cfg)

    fused = bilinear_upsample(coarse, n)
    for roi in rois:
        fine = crop(image, roi.scaled(n))
        fused = fuse_features_into(fused, fine, roi.scaled(n))
    report = cost_report(image.height, image.width, cfg, [r.scaled(n) for r in rois])
    return PipelineResult(mask, rois, fused, report)


def fuse_features_into(base: FeatureGrid, fine: FeatureGrid, window: Roi) -> FeatureGrid:
    """Add a fine crop onto an already-upsampled grid at a full-res window."""
    if window.row1 > base.height or window.col1 > base.width:
        raise ShapeError(f"window {window} outside grid {base.height}x{base.width}")
    if (fine.height, fine.width) != (window.height, window.width):
        raise ShapeError("fine grid does not match window")
    out = base.data.copy()
    out[window.row0:window.row1, window.col0:window.col1] += fine.data
    return FeatureGrid(out)
