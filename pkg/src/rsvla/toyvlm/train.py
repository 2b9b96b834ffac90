"""Joint training loop: caption loss plus weighted alignment loss, adaptive
moment updates with decoupled weight decay applied only to the trainable
scope (vocab head, alignment projector, retrieval-token embedding); every
other parameter group stays bit-identical.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..errors import TrainingDivergedError
from ..msvlam import AlignWeights, align_loss
from .autodiff import Tensor, backward, cosine_t
from .model import (TRAINABLE_NAMES, TokenSeq, ToyModelConfig, caption_loss_t,
                    cross_modal_attention, decode_logits, extract_patches)
from .schedule import TrainConfig, lr_at
from .synth import TrainItem

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainReport:
    totals: List[float] = field(default_factory=list)
    captions: List[float] = field(default_factory=list)
    aligns: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    frozen_checksum_before: str = ""
    frozen_checksum_after: str = ""
    trainable_checksum_before: str = ""
    trainable_checksum_after: str = ""

    @property
    def steps(self) -> int:
        return len(self.totals)


def group_checksum(params: Dict[str, np.ndarray], names: Sequence[str]) -> str:
    h = hashlib.sha256()
    for name in sorted(names):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name]).tobytes())
    return h.hexdigest()


def _item_forward(item_cache, params_t, cfg: ToyModelConfig,
                  weights: AlignWeights):
    """Build the per-item total-loss tape; returns (total, caption, align)."""
    patches, text_const, ret_selector, target_ids, align_const, t_cls = item_cache

    img_feats = Tensor(patches) @ params_t["patch_w"] + params_t["patch_b"] \
        + params_t["pos_embed"]
    # row 0 is the [RET] slot: selector @ ret_embed adds the trainable row
    text = Tensor(text_const) + ret_selector @ params_t["ret_embed"].reshape(1, -1)
    fused = cross_modal_attention(text, img_feats, params_t, cfg.heads)
    logits = decode_logits(fused, cfg, params_t)
    cap = caption_loss_t(logits, target_ids)

    pooled = img_feats.mean(axis=0)
    g_raw = pooled @ params_t["proj_w"] + params_t["proj_b"]
    l_glob = 1.0 - cosine_t(g_raw, Tensor(t_cls))
    align = align_const + weights.gamma * l_glob
    total = cap + weights.delta * align
    return total, cap, align


def _prepare_items(dataset: Sequence[TrainItem], cfg: ToyModelConfig,
                   weights: AlignWeights):
    """Precompute everything that does not depend on trainable parameters."""
    caches = []
    for item in dataset:
        item.tokens.validate(cfg)
        ids = list(item.tokens.ids)
        T = len(ids)
        text_const = np.zeros((T, cfg.embed_dim))
        selector = np.zeros((T, 1))
        selector[0, 0] = 1.0
        breakdown = align_loss(item.align, weights)
        # object and region terms carry no trainable parameters; the global
        # term is recomputed on-tape from the model projector
        align_const = (weights.alpha * breakdown.l_obj
                       + weights.beta * breakdown.l_reg)
        caches.append((item, ids, text_const, selector, align_const,
                       item.align.global_text))
    return caches


def train(dataset: Sequence[TrainItem], params: Dict[str, np.ndarray],
          cfg: TrainConfig, weights: AlignWeights, model_cfg: ToyModelConfig,
          steps: int | None = None) -> TrainReport:
    """Run `steps` optimizer steps (default: the full schedule horizon)."""
    if not dataset:
        raise ValueError("dataset is empty")
    steps = cfg.total_steps if steps is None else steps
    if steps > cfg.total_steps:
        raise ValueError("steps exceed the schedule horizon")

    frozen_names = [k for k in params if k not in TRAINABLE_NAMES]
    report = TrainReport(
        frozen_checksum_before=group_checksum(params, frozen_names),
        trainable_checksum_before=group_checksum(params, TRAINABLE_NAMES))

    raw_caches = _prepare_items(dataset, model_cfg, weights)
    item_caches = []
    for item, ids, text_const, selector, align_const, t_cls in raw_caches:
        patches = extract_patches(item.image, model_cfg)
        # frozen token rows for positions 1..T-1 (position 0 is [RET])
        tc = text_const.copy()
        tc[1:] = params["tok_embed"][ids[:-1]]
        item_caches.append((patches, tc, Tensor(selector), ids, align_const,
                            t_cls))

    rng = np.random.default_rng(cfg.seed)
    m = {k: np.zeros_like(params[k]) for k in TRAINABLE_NAMES}
    v = {k: np.zeros_like(params[k]) for k in TRAINABLE_NAMES}

    for step in range(1, steps + 1):
        lr = lr_at(step, cfg)
        idxs = rng.integers(0, len(dataset), size=cfg.batch_size)

        params_t = {k: Tensor(val, requires_grad=(k in TRAINABLE_NAMES),
                              name=(k if k in TRAINABLE_NAMES else None))
                    for k, val in params.items()}
        total = None
        cap_sum = 0.0
        align_sum = 0.0
        for i in idxs:
            tot_i, cap_i, align_i = _item_forward(item_caches[i], params_t,
                                                  model_cfg, weights)
            total = tot_i if total is None else total + tot_i
            cap_sum += cap_i.item()
            align_sum += (align_i.item() if isinstance(align_i, Tensor)
                          else float(align_i))
        total = total * (1.0 / cfg.batch_size)
        loss_val = total.item()
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(step)

        grads = backward(total)
        t = step
        for k in TRAINABLE_NAMES:
            g = grads.get(k)
            if g is None:
                continue
            m[k] = ADAM_BETA1 * m[k] + (1 - ADAM_BETA1) * g
            v[k] = ADAM_BETA2 * v[k] + (1 - ADAM_BETA2) * g * g
            m_hat = m[k] / (1 - ADAM_BETA1 ** t)
            v_hat = v[k] / (1 - ADAM_BETA2 ** t)
            params[k] = params[k] - lr * (m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                                          + cfg.weight_decay * params[k])

        report.totals.append(loss_val)
        report.captions.append(cap_sum / cfg.batch_size)
        report.aligns.append(align_sum / cfg.batch_size)
        report.lrs.append(lr)

    report.frozen_checksum_after = group_checksum(params, frozen_names)
    report.trainable_checksum_after = group_checksum(params, TRAINABLE_NAMES)
    return report
