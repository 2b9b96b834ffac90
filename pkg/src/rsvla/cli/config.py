"""Flat key=value run configuration.

Lines are `key = value`, `#` starts a comment, unknown keys are rejected.
Environment variables prefixed RSVLA_ (e.g. RSVLA_SEED=7) override file
values. None of the alignment weights below come from published values;
they are pinned defaults and every report prints them back for provenance.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict

from ..dris import DrisConfig
from ..msvlam import AlignWeights
from ..toyvlm import ToyModelConfig, TrainConfig

ENV_PREFIX = "RSVLA_"


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class RunConfig:
    # dynamic resolution pipeline
    tau_saliency: float = 0.5
    sigma: float = 1.5
    k: int = 4
    n: int = 4
    roi_h: int = 4
    roi_w: int = 4
    # alignment weights
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    mu: float = 0.5
    tau_temp: float = 0.07
    delta: float = 0.5
    # toy model shape
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    heads: int = 4
    vocab: int = 64
    max_text_len: int = 16
    channels: int = 3
    align_dim: int = 16
    logit_gain: float = 100.0
    pool_size: int = 2
    # training
    batch_size: int = 8
    peak_lr: float = 3e-4
    warmup_steps: int = 100
    total_steps: int = 1000
    run_steps: int = 200
    weight_decay: float = 0.0
    seed: int = 0
    dataset_size: int = 32
    caption_len: int = 12

    def to_dris(self) -> DrisConfig:
        return DrisConfig(tau_saliency=self.tau_saliency, sigma=self.sigma,
                          k=self.k, n=self.n, roi_size=(self.roi_h, self.roi_w))

    def to_align_weights(self) -> AlignWeights:
        return AlignWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                            mu=self.mu, tau_temp=self.tau_temp, delta=self.delta)

    def to_model(self) -> ToyModelConfig:
        return ToyModelConfig(image_size=self.image_size,
                              patch_size=self.patch_size,
                              embed_dim=self.embed_dim, heads=self.heads,
                              vocab=self.vocab,
                              max_text_len=self.max_text_len,
                              channels=self.channels,
                              align_dim=self.align_dim,
                              logit_gain=self.logit_gain)

    def to_train(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, peak_lr=self.peak_lr,
                           warmup_steps=self.warmup_steps,
                           total_steps=self.total_steps,
                           weight_decay=self.weight_decay, seed=self.seed)

    def as_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _field_types() -> Dict[str, type]:
    return {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    types = _field_types()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        _assign(cfg, types, key, value, f"{source}:{lineno}")
    _apply_env(cfg, types)
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        _apply_env(cfg, _field_types())
        return cfg
    return parse_config_text(Path(path).read_text(), str(path))


def _assign(cfg: RunConfig, types: Dict[str, type], key: str, value: str,
            where: str) -> None:
    if key not in types:
        raise ValueError(f"{where}: unknown configuration key {key!r}")
    typ = types[key]
    try:
        if typ is bool:
            parsed = _parse_bool(value)
        elif typ is int:
            parsed = int(value)
        elif typ is float:
            parsed = float(value)
        else:
            parsed = value
    except ValueError as exc:
        raise ValueError(f"{where}: bad value for {key!r}: {exc}") from exc
    setattr(cfg, key, parsed)


def _apply_env(cfg: RunConfig, types: Dict[str, type]) -> None:
    for key in types:
        env_val = os.environ.get(ENV_PREFIX + key.upper())
        if env_val is not None:
            _assign(cfg, types, key, env_val, f"env {ENV_PREFIX}{key.upper()}")
