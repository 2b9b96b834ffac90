"""Deterministic stand-in text encoder for ingestion paths.

No trained encoder is in scope, so labels and phrases are embedded with a
seeded bag-of-words feature hash: each token maps to a fixed pseudo-random
direction and the token sum is L2-normalized. Stable across runs and
platforms for a fixed seed.
"""
from __future__ import annotations

import hashlib

import numpy as np

from ..capmetrics import tokenize
from ..gridcore import l2_normalize


def _token_direction(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{token}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.normal(size=dim)


def hash_text_embedding(text: str, dim: int, seed: int = 0) -> np.ndarray:
    tokens = tokenize(text)
    if not tokens:
        # empty text gets a fixed non-zero direction so cosine stays defined
        tokens = ["<empty>"]
    acc = np.zeros(dim)
    for tok in tokens:
        acc += _token_direction(tok, dim, seed)
    if not np.any(acc):
        acc = _token_direction("<zero>", dim, seed)
    return l2_normalize(acc).values
