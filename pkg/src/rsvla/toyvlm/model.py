"""Desk-scale vision-language model: patch embedding, cross-modal attention,
vocab head, caption loss, and the joint objective.

Toy defaults run in milliseconds; the full-scale reference configuration
(224px / 16px patches / 768 dims / 12 heads / 32k vocab) is kept as a
documented constant and exercised only for shape checks.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..gridcore import FeatureGrid
from .autodiff import Tensor, astensor, backward, log_softmax_rows, softmax_rows

PROB_FLOOR = 1e-12

# parameter groups that the optimizer may touch; everything else is frozen
TRAINABLE_NAMES = ("vocab_w", "vocab_b", "proj_w", "proj_b", "ret_embed")


@dataclass(frozen=True)
class ToyModelConfig:
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    heads: int = 4
    vocab: int = 64
    max_text_len: int = 16
    channels: int = 3
    align_dim: int = 16
    # fixed output gain so the pinned small-lr schedule moves logits
    # meaningfully at toy scale
    logit_gain: float = 100.0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError("patch_size must divide image_size")
        if self.embed_dim % self.heads:
            raise ValueError("heads must divide embed_dim")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


# full-scale reference shape contract: 196 patches, 12 heads, 768 dims
FULL_SCALE = ToyModelConfig(image_size=224, patch_size=16, embed_dim=768,
                             heads=12, vocab=32000, max_text_len=64)


@dataclass(frozen=True)
class TokenSeq:
    ids: Tuple[int, ...]

    def __post_init__(self):
        if not self.ids:
            raise ValueError("token sequence is empty")
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def validate(self, cfg: ToyModelConfig):
        if len(self.ids) > cfg.max_text_len:
            raise ValueError(f"sequence length {len(self.ids)} exceeds "
                             f"max_text_len {cfg.max_text_len}")
        for i in self.ids:
            if not 0 <= i < cfg.vocab:
                raise ValueError(f"token id {i} outside vocab {cfg.vocab}")

    def __len__(self) -> int:
        return len(self.ids)


def init_params(cfg: ToyModelConfig, rng: np.random.Generator
                ) -> Dict[str, np.ndarray]:
    d = cfg.embed_dim
    params = {
        "patch_w": rng.normal(0, 1.0 / np.sqrt(cfg.patch_dim), (cfg.patch_dim, d)),
        "patch_b": np.zeros(d),
        "pos_embed": rng.normal(0, 0.02, (cfg.n_patches, d)),
        "tok_embed": rng.normal(0, 1.0, (cfg.vocab, d)),
        "attn_wq": rng.normal(0, 1.0 / np.sqrt(d), (d, d)),
        "attn_wk": rng.normal(0, 1.0 / np.sqrt(d), (d, d)),
        "attn_wv": rng.normal(0, 1.0 / np.sqrt(d), (d, d)),
        "attn_wo": rng.normal(0, 1.0 / np.sqrt(d), (d, d)),
        # trainable scope: vocab head starts uniform, alignment projector tiny
        "vocab_w": np.zeros((d, cfg.vocab)),
        "vocab_b": np.zeros(cfg.vocab),
        "proj_w": rng.normal(0, 0.01, (d, cfg.align_dim)),
        "proj_b": np.zeros(cfg.align_dim),
        "ret_embed": rng.normal(0, 1.0, d),
    }
    return params


def split_param_groups(params: Dict[str, np.ndarray]
                       ) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    trainable = {k: v for k, v in params.items() if k in TRAINABLE_NAMES}
    frozen = {k: v for k, v in params.items() if k not in TRAINABLE_NAMES}
    return trainable, frozen


def extract_patches(image: FeatureGrid, cfg: ToyModelConfig) -> np.ndarray:
    """(n_patches, patch_dim) matrix of flattened non-overlapping patches."""
    if (image.height, image.width) != (cfg.image_size, cfg.image_size):
        raise ShapeError(f"expected {cfg.image_size}x{cfg.image_size} image, "
                         f"got {image.height}x{image.width}")
    if image.channels != cfg.channels:
        raise ShapeError(f"expected {cfg.channels} channels, got {image.channels}")
    p = cfg.patch_size
    g = cfg.image_size // p
    arr = image.data.reshape(g, p, g, p, cfg.channels)
    return arr.transpose(0, 2, 1, 3, 4).reshape(g * g, cfg.patch_dim)


def patch_embed(image: FeatureGrid, cfg: ToyModelConfig,
                params: Dict[str, Tensor | np.ndarray]) -> Tensor:
    """Linear patch projection plus learned positional embeddings."""
    patches = Tensor(extract_patches(image, cfg))
    return patches @ astensor(params["patch_w"]) + astensor(params["patch_b"]) \
        + astensor(params["pos_embed"])


def cross_modal_attention(text_feats, image_feats,
                          params: Dict[str, Tensor | np.ndarray],
                          heads: int) -> Tensor:
    """Multi-head scaled dot-product attention, text queries over image keys.

    Output keeps the text sequence shape (T, embed_dim). Head outputs are
    folded through the matching row-block of the output map, which equals
    the usual concat-then-project form.
    """
    text = astensor(text_feats)
    image = astensor(image_feats)
    d = text.shape[-1]
    if d % heads:
        raise ShapeError("heads must divide embed_dim")
    if image.shape[-1] != d:
        raise ShapeError("text and image feature dims differ")
    dh = d // heads
    q = text @ astensor(params["attn_wq"])
    k = image @ astensor(params["attn_wk"])
    v = image @ astensor(params["attn_wv"])
    wo = astensor(params["attn_wo"])

    out = None
    scale = 1.0 / np.sqrt(dh)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].T) * scale
        attn = softmax_rows(scores)
        head_out = (attn @ v[:, sl]) @ wo[sl, :]
        out = head_out if out is None else out + head_out
    return out


def decode_logits(fused: Tensor, cfg: ToyModelConfig,
                  params: Dict[str, Tensor | np.ndarray]) -> Tensor:
    return (fused @ astensor(params["vocab_w"]) + astensor(params["vocab_b"])) \
        * cfg.logit_gain


def caption_loss(step_probs: np.ndarray, target: TokenSeq
                 ) -> Tuple[float, np.ndarray, bool]:
    """Negative log-likelihood of the target under per-position distributions.

    `step_probs` is (T, vocab) with rows summing to 1 (checked at 1e-9).
    Returns the loss, its gradient with respect to the pre-softmax logits
    (probs minus one-hot), and a flag set when the 1e-12 probability floor
    clipped any target probability.
    """
    probs = np.asarray(step_probs, dtype=np.float64)
    ids = target.ids
    if probs.ndim != 2 or probs.shape[0] != len(ids):
        raise ShapeError(f"need one distribution per target token, "
                         f"got {probs.shape} for {len(ids)} tokens")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("each position's distribution must sum to 1")
    rows = np.arange(len(ids))
    picked = probs[rows, list(ids)]
    clamped = bool(np.any(picked < PROB_FLOOR))
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())
    grad_logits = probs.copy()
    grad_logits[rows, list(ids)] -= 1.0
    return loss, grad_logits, clamped


def caption_loss_t(logits: Tensor, target_ids: Sequence[int]) -> Tensor:
    """Tape version over raw logits: -sum_k log softmax(logits_k)[x_k]."""
    ls = log_softmax_rows(logits)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(target_ids)), list(target_ids)] = 1.0
    return -(Tensor(onehot) * ls).sum()


def total_loss(caption: float, align, delta: float) -> float:
    """Joint objective: caption loss plus delta times the alignment loss."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    l_align = align.l_align if hasattr(align, "l_align") else float(align)
    return float(caption) + delta * l_align
