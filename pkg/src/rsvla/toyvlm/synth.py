"""Seeded synthetic image-text-alignment triples for the toy training loop.

Captions draw from a small planted alphabet so the vocab head can learn
their statistics; object and region embeddings are planted perfectly
aligned; the global text vector is a fixed linear "teacher" readout of the
image so the alignment projector has a consistent target.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..gridcore import FeatureGrid, Roi, l2_normalize
from ..msvlam import AlignBatch, BoxPair
from .model import TokenSeq, ToyModelConfig


@dataclass(frozen=True)
class TrainItem:
    image: FeatureGrid
    tokens: TokenSeq
    align: AlignBatch


def planted_alphabet(cfg: ToyModelConfig, size: int = 4) -> List[int]:
    step = max(1, cfg.vocab // (size * 2))
    return [2 + i * step for i in range(size)]


def _random_box(rng: np.random.Generator, extent: int) -> Roi:
    h = int(rng.integers(2, max(3, extent // 2)))
    w = int(rng.integers(2, max(3, extent // 2)))
    r0 = int(rng.integers(0, extent - h))
    c0 = int(rng.integers(0, extent - w))
    return Roi(r0, c0, r0 + h, c0 + w)


def generate_dataset(n_items: int, cfg: ToyModelConfig, seed: int,
                     caption_len: int = 12, n_objects: int = 2,
                     n_regions: int = 2, n_phrases: int = 3
                     ) -> List[TrainItem]:
    if caption_len > cfg.max_text_len:
        raise ValueError("caption_len exceeds max_text_len")
    rng = np.random.default_rng(seed)
    teacher = rng.normal(size=(cfg.align_dim, cfg.channels))
    alphabet = planted_alphabet(cfg)
    items: List[TrainItem] = []
    for _ in range(n_items):
        img = FeatureGrid(rng.normal(size=(cfg.image_size, cfg.image_size,
                                           cfg.channels)))
        ids = TokenSeq(tuple(int(t) for t in
                             rng.choice(alphabet, size=caption_len)))

        phrases = [l2_normalize(rng.normal(size=cfg.align_dim)).values
                   for _ in range(n_phrases)]
        region_visual = [phrases[k % n_phrases].copy() for k in range(n_regions)]
        positives = [k % n_phrases for k in range(n_regions)]

        pairs, obj_v, obj_t = [], [], []
        for _ in range(n_objects):
            box = _random_box(rng, cfg.image_size)
            pairs.append(BoxPair(box, box))
            o = l2_normalize(rng.normal(size=cfg.align_dim)).values
            obj_t.append(o)
            obj_v.append(o.copy())

        pooled = img.data.mean(axis=(0, 1))
        t_cls = l2_normalize(teacher @ pooled).values
        batch = AlignBatch(object_pairs=pairs, object_visual=obj_v,
                           object_text=obj_t, region_visual=region_visual,
                           phrases=phrases, positive_index=positives,
                           global_visual=t_cls.copy(), global_text=t_cls,
                           hard_assignment=list(positives))
        items.append(TrainItem(img, ids, batch))
    return items


def split_dataset(items: List[TrainItem]
                  ) -> Tuple[List[TrainItem], List[TrainItem], List[TrainItem]]:
    """Deterministic 7:2:1 train/val/test split by position."""
    n = len(items)
    n_train = (7 * n) // 10
    n_val = (2 * n) // 10
    return (items[:n_train], items[n_train:n_train + n_val],
            items[n_train + n_val:])
