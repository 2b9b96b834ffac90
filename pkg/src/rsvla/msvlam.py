"""Multi-scale vision-language alignment losses with analytic gradients.

Three tiers: object-level cosine alignment with IoU-derived weights,
local-region hard-match plus InfoNCE soft-match, and a global cosine term.
Every loss returns its value together with exact partial derivatives with
respect to each raw embedding input; the finite-difference checker in
`toyvlm.fdcheck` is the independent oracle for those gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateVectorError, ShapeError
from .gridcore import (EmbedVec, FeatureGrid, Roi, as_vector, crop,
                       l2_normalize, layer_norm, pool)

Gradients = Dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxPair:
    predicted: Roi
    ground_truth: Roi


@dataclass(frozen=True)
class RegionMask:
    """Binary membership mask over a grid; at least one member cell."""

    membership: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.membership, dtype=bool)
        if arr.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got {arr.shape}")
        if not arr.any():
            raise ValueError("region mask has no member cells")
        object.__setattr__(self, "membership", arr)

    @property
    def height(self) -> int:
        return self.membership.shape[0]

    @property
    def width(self) -> int:
        return self.membership.shape[1]


@dataclass(frozen=True)
class LinearMap:
    """Affine projector y = W x + b."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.size != w.shape[0]:
            raise ShapeError(f"bad projector shapes: W {w.shape}, b {b.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def random(cls, out_dim: int, in_dim: int, rng: np.random.Generator,
               scale: float | None = None) -> "LinearMap":
        s = scale if scale is not None else 1.0 / np.sqrt(in_dim)
        return cls(rng.normal(0.0, s, size=(out_dim, in_dim)), np.zeros(out_dim))

    def apply(self, x) -> np.ndarray:
        v = as_vector(x)
        if v.size != self.weight.shape[1]:
            raise ShapeError(
                f"projector expects dim {self.weight.shape[1]}, got {v.size}")
        return self.weight @ v + self.bias


@dataclass(frozen=True)
class AlignWeights:
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    mu: float = 0.5
    tau_temp: float = 0.07
    delta: float = 0.5

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta, gamma must be non-negative")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.tau_temp <= 0:
            raise ValueError("temperature must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class AlignBatch:
    """One image's alignment payload.

    Embedding lists hold raw (not necessarily normalized) vectors of one
    common dimension. `positive_index[k]` is the InfoNCE positive phrase for
    region k; `hard_assignment[k]` the hard-match phrase (None selects the
    greedy argmax-cosine heuristic).
    """

    object_pairs: List[BoxPair]
    object_visual: List[np.ndarray]
    object_text: List[np.ndarray]
    region_visual: List[np.ndarray]
    phrases: List[np.ndarray]
    positive_index: List[int]
    global_visual: np.ndarray
    global_text: np.ndarray
    hard_assignment: Optional[List[int]] = None
    visual_grid: Optional[FeatureGrid] = None
    region_masks: Optional[List[RegionMask]] = None

    def __post_init__(self):
        self.object_visual = [as_vector(v) for v in self.object_visual]
        self.object_text = [as_vector(v) for v in self.object_text]
        self.region_visual = [as_vector(v) for v in self.region_visual]
        self.phrases = [as_vector(v) for v in self.phrases]
        self.global_visual = as_vector(self.global_visual)
        self.global_text = as_vector(self.global_text)
        P, K, M = len(self.object_visual), len(self.region_visual), len(self.phrases)
        if P < 1 or K < 1 or M < 1:
            raise ValueError("batch needs P >= 1 objects, K >= 1 regions, M >= 1 phrases")
        if len(self.object_pairs) != P or len(self.object_text) != P:
            raise ShapeError("object lists must have equal length")
        if len(self.positive_index) != K:
            raise ShapeError("positive_index must have one entry per region")
        dims = {v.size for v in (self.object_visual + self.object_text +
                                 self.region_visual + self.phrases +
                                 [self.global_visual, self.global_text])}
        if len(dims) != 1:
            raise ShapeError(f"embedding dims disagree: {sorted(dims)}")
        for y in self.positive_index:
            if not 0 <= y < M:
                raise ValueError(f"positive index {y} out of range [0, {M})")
        if self.hard_assignment is not None:
            if len(self.hard_assignment) != K:
                raise ShapeError("hard_assignment must have one entry per region")
            for j in self.hard_assignment:
                if not 0 <= j < M:
                    raise ValueError(f"hard assignment {j} out of range [0, {M})")


@dataclass(frozen=True)
class LossBreakdown:
    l_obj: float
    l_reg_hard: float
    l_reg_nce: float
    l_reg: float
    l_glob: float
    l_align: float
    gradients: Gradients = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# similarity primitives
# ---------------------------------------------------------------------------

def cosine(u, v) -> float:
    c, _, _ = cosine_with_grads(u, v)
    return c


def cosine_with_grads(u, v) -> Tuple[float, np.ndarray, np.ndarray]:
    """Cosine similarity plus d cos/du and d cos/dv at raw vectors."""
    u = as_vector(u)
    v = as_vector(v)
    if u.size != v.size:
        raise ShapeError(f"dim mismatch: {u.size} vs {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector")
    c = float(u @ v) / (nu * nv)
    du = v / (nu * nv) - c * u / (nu * nu)
    dv = u / (nu * nv) - c * v / (nv * nv)
    return c, du, dv


def iou(a: Roi, b: Roi) -> float:
    inter_h = min(a.row1, b.row1) - max(a.row0, b.row0)
    inter_w = min(a.col1, b.col1) - max(a.col0, b.col0)
    if inter_h <= 0 or inter_w <= 0:
        return 0.0
    inter = inter_h * inter_w
    return inter / (a.area + b.area - inter)


def iou_weights(pairs: Sequence[BoxPair]) -> List[float]:
    """Per-object weights IoU_p / sum_q IoU_q; uniform fallback when all zero."""
    if len(pairs) < 1:
        raise ValueError("need at least one box pair")
    ious = [iou(p.predicted, p.ground_truth) for p in pairs]
    total = sum(ious)
    if total == 0.0:
        return [1.0 / len(pairs)] * len(pairs)
    return [x / total for x in ious]


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def object_features(v: FeatureGrid, boxes: Sequence[Roi], projector: LinearMap,
                    pool_size: int = 2) -> List[EmbedVec]:
    """Crop each box, adaptively average-pool, flatten, and project."""
    out = []
    for box in boxes:
        region = crop(v, box)
        ph = min(pool_size, region.height)
        pw = min(pool_size, region.width)
        pooled = pool(region, ph, pw, "average")
        if (ph, pw) != (pool_size, pool_size):
            # boxes smaller than the pool grid replicate their cells
            reps = np.zeros((pool_size, pool_size, region.channels))
            for i in range(pool_size):
                for j in range(pool_size):
                    reps[i, j] = pooled.data[min(i, ph - 1), min(j, pw - 1)]
            pooled = FeatureGrid(reps)
        out.append(EmbedVec(projector.apply(pooled.data.ravel())))
    return out


def project_text(e, projector: LinearMap) -> EmbedVec:
    return EmbedVec(projector.apply(e))


def region_features(v: FeatureGrid, masks: Sequence[RegionMask],
                    projector: LinearMap) -> List[EmbedVec]:
    """Masked per-channel average over member cells, then projection."""
    out = []
    for mask in masks:
        if (mask.height, mask.width) != (v.height, v.width):
            raise ShapeError("mask dims must match grid dims")
        mean = v.data[mask.membership].mean(axis=0)
        out.append(EmbedVec(projector.apply(mean)))
    return out


def spp_concat(v: FeatureGrid, levels: Sequence[int] = (1, 2, 4)) -> np.ndarray:
    """Concatenated multi-level adaptive average pools (sum L^2 cells x C values)."""
    if max(levels) > min(v.height, v.width):
        raise ValueError(f"spp level {max(levels)} exceeds grid dims")
    parts = [pool(v, L, L, "average").data.ravel() for L in levels]
    return np.concatenate(parts)


def spp(v: FeatureGrid, levels: Sequence[int], projector: LinearMap,
        eps: float = 1e-5) -> EmbedVec:
    """Spatial pyramid pooling: concat pools, project, LayerNorm, L2-normalize."""
    z = projector.apply(spp_concat(v, levels))
    return l2_normalize(layer_norm(z, eps))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def object_loss(v_objs: Sequence, o_objs: Sequence, weights: Sequence[float]
                ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """1 - (1/P) sum_p w_p cos(v_p, o_p), gradients w.r.t. every v_p, o_p.

    Both the normalized w_p and the extra 1/P factor are kept, as printed.
    """
    P = len(v_objs)
    if P < 1 or len(o_objs) != P or len(weights) != P:
        raise ShapeError("object lists and weights must share length P >= 1")
    loss = 1.0
    dvs, dos = [], []
    for v, o, w in zip(v_objs, o_objs, weights):
        c, du, dv = cosine_with_grads(v, o)
        loss -= w * c / P
        dvs.append(-(w / P) * du)
        dos.append(-(w / P) * dv)
    return loss, dvs, dos


def region_hard_loss(v_regions: Sequence, phrases: Sequence,
                     assignment: Sequence[int]
                     ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """1 - (1/K) sum_k cos(v_k, p_pi(k)); phrase grads accumulate over repeats."""
    K, M = len(v_regions), len(phrases)
    if len(assignment) != K:
        raise ShapeError("assignment must have one index per region")
    for j in assignment:
        if not 0 <= j < M:
            raise ValueError(f"assignment index {j} out of range [0, {M})")
    loss = 1.0
    dvs = []
    dps = [np.zeros(as_vector(p).size) for p in phrases]
    for k, (v, j) in enumerate(zip(v_regions, assignment)):
        c, du, dv = cosine_with_grads(v, phrases[j])
        loss -= c / K
        dvs.append(-du / K)
        dps[j] = dps[j] - dv / K
    return loss, dvs, dps


def region_nce_loss(v_regions: Sequence, phrases: Sequence,
                    positives: Sequence[int], tau_temp: float
                    ) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Region-anchored InfoNCE over raw dot-product scores v_k . p_j / tau."""
    if tau_temp <= 0:
        raise ValueError("temperature must be positive")
    V = np.stack([as_vector(v) for v in v_regions])
    P = np.stack([as_vector(p) for p in phrases])
    K, M = V.shape[0], P.shape[0]
    if len(positives) != K:
        raise ShapeError("positives must have one index per region")
    y = np.asarray(positives, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= M):
        raise ValueError("positive index out of range")

    scores = (V @ P.T) / tau_temp
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(K), y]))

    soft = np.exp(shifted)
    soft /= soft.sum(axis=1, keepdims=True)
    resid = soft.copy()
    resid[np.arange(K), y] -= 1.0
    dV = (resid @ P) / (K * tau_temp)
    dP = (resid.T @ V) / (K * tau_temp)
    return loss, list(dV), list(dP)


def region_loss(hard: float, nce: float, mu: float) -> float:
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    return mu * hard + (1.0 - mu) * nce


def global_loss(g, t_cls) -> Tuple[float, np.ndarray, np.ndarray]:
    c, du, dv = cosine_with_grads(g, t_cls)
    return 1.0 - c, -du, -dv


def default_hard_assignment(v_regions: Sequence, phrases: Sequence) -> List[int]:
    """Greedy heuristic: each region takes its argmax-cosine phrase."""
    out = []
    for v in v_regions:
        sims = [cosine(v, p) for p in phrases]
        out.append(int(np.argmax(sims)))
    return out


def align_loss(batch: AlignBatch, weights: AlignWeights) -> LossBreakdown:
    """Weighted three-tier alignment objective with the full gradient table.

    Gradient keys: object_visual.p, object_text.p, region_visual.k,
    phrase.j, global_visual, global_text.
    """
    w_p = iou_weights(batch.object_pairs)
    l_obj, d_ov, d_ot = object_loss(batch.object_visual, batch.object_text, w_p)

    assignment = batch.hard_assignment
    if assignment is None:
        assignment = default_hard_assignment(batch.region_visual, batch.phrases)
    l_hard, dh_v, dh_p = region_hard_loss(batch.region_visual, batch.phrases,
                                          assignment)
    l_nce, dn_v, dn_p = region_nce_loss(batch.region_visual, batch.phrases,
                                        batch.positive_index, weights.tau_temp)
    l_reg = region_loss(l_hard, l_nce, weights.mu)
    l_glob, dg_g, dg_t = global_loss(batch.global_visual, batch.global_text)

    a, b, g, mu = weights.alpha, weights.beta, weights.gamma, weights.mu
    l_align = a * l_obj + b * l_reg + g * l_glob

    grads: Gradients = {}
    for p, (dv, do) in enumerate(zip(d_ov, d_ot)):
        grads[f"object_visual.{p}"] = a * dv
        grads[f"object_text.{p}"] = a * do
    for k in range(len(batch.region_visual)):
        grads[f"region_visual.{k}"] = b * (mu * dh_v[k] + (1 - mu) * dn_v[k])
    for j in range(len(batch.phrases)):
        grads[f"phrase.{j}"] = b * (mu * dh_p[j] + (1 - mu) * dn_p[j])
    grads["global_visual"] = g * dg_g
    grads["global_text"] = g * dg_t

    return LossBreakdown(l_obj=l_obj, l_reg_hard=l_hard, l_reg_nce=l_nce,
                         l_reg=l_reg, l_glob=l_glob, l_align=l_align,
                         gradients=grads)
