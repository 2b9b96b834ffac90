"""Machine-checkable property suite behind the `selfcheck` verb.

Each check returns a named pass/fail result; the whole suite is also reused
by the test suite. Gradient checks pit every analytic gradient against the
central finite-difference oracle.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

from .. import capmetrics as cm
from ..dris import DrisConfig, cost_report, select_rois
from ..gridcore import FeatureGrid, Roi, l2_normalize
from ..msvlam import AlignBatch, AlignWeights, BoxPair, align_loss
from ..toyvlm import (TrainConfig, caption_loss, finite_diff_check,
                      load_checkpoint, lr_at, save_checkpoint)
from .formats import read_grid, write_grid


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


# ---------------------------------------------------------------------------
# random instances and gradient plumbing
# ---------------------------------------------------------------------------

def random_align_instance(rng: np.random.Generator,
                          max_dim: int = 16, max_count: int = 5
                          ) -> Tuple[AlignBatch, AlignWeights]:
    dim = int(rng.integers(2, max_dim + 1))
    P = int(rng.integers(1, max_count + 1))
    K = int(rng.integers(1, max_count + 1))
    M = int(rng.integers(1, max_count + 1))

    def vec():
        return l2_normalize(rng.normal(size=dim)).values

    def box():
        r0, c0 = rng.integers(0, 6, size=2)
        h, w = rng.integers(1, 5, size=2)
        return Roi(int(r0), int(c0), int(r0 + h), int(c0 + w))

    batch = AlignBatch(
        object_pairs=[BoxPair(box(), box()) for _ in range(P)],
        object_visual=[vec() for _ in range(P)],
        object_text=[vec() for _ in range(P)],
        region_visual=[vec() for _ in range(K)],
        phrases=[vec() for _ in range(M)],
        positive_index=[int(rng.integers(0, M)) for _ in range(K)],
        global_visual=vec(), global_text=vec(),
        hard_assignment=[int(rng.integers(0, M)) for _ in range(K)])
    weights = AlignWeights(alpha=float(rng.uniform(0.1, 1.0)),
                           beta=float(rng.uniform(0.1, 1.0)),
                           gamma=float(rng.uniform(0.1, 1.0)),
                           mu=float(rng.uniform(0.0, 1.0)),
                           tau_temp=float(rng.uniform(0.07, 0.5)),
                           delta=float(rng.uniform(0.1, 1.0)))
    return batch, weights


def align_params(batch: AlignBatch) -> Dict[str, np.ndarray]:
    params = {}
    for p, (v, o) in enumerate(zip(batch.object_visual, batch.object_text)):
        params[f"object_visual.{p}"] = v
        params[f"object_text.{p}"] = o
    for k, v in enumerate(batch.region_visual):
        params[f"region_visual.{k}"] = v
    for j, ph in enumerate(batch.phrases):
        params[f"phrase.{j}"] = ph
    params["global_visual"] = batch.global_visual
    params["global_text"] = batch.global_text
    return params


def rebuild_batch(batch: AlignBatch, params: Dict[str, np.ndarray]) -> AlignBatch:
    P, K, M = (len(batch.object_visual), len(batch.region_visual),
               len(batch.phrases))
    return AlignBatch(
        object_pairs=batch.object_pairs,
        object_visual=[params[f"object_visual.{p}"] for p in range(P)],
        object_text=[params[f"object_text.{p}"] for p in range(P)],
        region_visual=[params[f"region_visual.{k}"] for k in range(K)],
        phrases=[params[f"phrase.{j}"] for j in range(M)],
        positive_index=batch.positive_index,
        global_visual=params["global_visual"],
        global_text=params["global_text"],
        hard_assignment=batch.hard_assignment)


def align_value_fn(batch: AlignBatch, weights: AlignWeights,
                   which: str = "l_align") -> Callable[[Dict[str, np.ndarray]], float]:
    def fn(params):
        bd = align_loss(rebuild_batch(batch, params), weights)
        return getattr(bd, which)
    return fn


def check_align_gradients(rng: np.random.Generator, corrupt: bool = False):
    batch, weights = random_align_instance(rng)
    breakdown = align_loss(batch, weights)
    grads = dict(breakdown.gradients)
    if corrupt:
        key = sorted(grads)[0]
        grads[key] = grads[key] + 0.5
    return finite_diff_check(align_value_fn(batch, weights),
                             align_params(batch), grads)


def check_caption_gradients(rng: np.random.Generator):
    T = int(rng.integers(1, 6))
    V = int(rng.integers(2, 9))
    logits = rng.normal(size=(T, V))
    ids = [int(i) for i in rng.integers(0, V, size=T)]

    def softmax(z):
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    from ..toyvlm.model import TokenSeq
    _, grad_logits, _ = caption_loss(softmax(logits), TokenSeq(tuple(ids)))

    def fn(params):
        val, _, _ = caption_loss(softmax(params["logits"]), TokenSeq(tuple(ids)))
        return val
    return finite_diff_check(fn, {"logits": logits}, {"logits": grad_logits})


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def _check_gradients(n: int, corrupt: bool) -> CheckResult:
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for i in range(n):
        rep = check_align_gradients(rng, corrupt=corrupt and i == 0)
        worst = max(worst, rep.max_rel_err)
        rep_c = check_caption_gradients(rng)
        worst = max(worst, rep_c.max_rel_err)
    ok = worst < 1e-4
    return CheckResult("gradient_fidelity", ok, f"max_rel_err={worst:.3e}")


def _check_bounds(n: int) -> CheckResult:
    rng = np.random.default_rng(7)
    for _ in range(n):
        batch, weights = random_align_instance(rng)
        bd = align_loss(batch, weights)
        recomposed = (weights.alpha * bd.l_obj + weights.beta * bd.l_reg
                      + weights.gamma * bd.l_glob)
        if not (0 <= bd.l_obj <= 2 and 0 <= bd.l_reg_hard <= 2
                and 0 <= bd.l_glob <= 2 and bd.l_reg_nce >= 0
                and abs(bd.l_align - recomposed) <= 1e-12):
            return CheckResult("loss_bounds", False, "bound violated")
    return CheckResult("loss_bounds", True, f"{n} instances")


def _check_metric_identities() -> CheckResult:
    probes = []
    c = cm.Caption.from_text("the cat sat on the mat")
    probes.append(abs(cm.bleu(c, cm.RefSet((c,)), 4) - 1.0) < 1e-9)
    probes.append(abs(cm.rouge_l(c, c) - 1.0) < 1e-9)
    t = cm.TripleSet.of(("cat", "on", "mat"))
    probes.append(abs(cm.spice_f1(t, t) - 1.0) < 1e-9)
    cand = cm.Caption.from_text("the cat sat")
    ref = cm.RefSet.from_texts(["the cat sat on the mat"])
    probes.append(abs(cm.bleu(cand, ref, 1) - np.exp(-1.0)) < 1e-6)
    ranks = [cm.RankedRetrieval(r) for r in (1, 3, 20)]
    probes.append(abs(cm.recall_at_k(ranks, 5) - 2 / 3) < 1e-12)
    ok = all(probes)
    return CheckResult("metric_identities", ok, f"{sum(probes)}/{len(probes)} hold")


def _check_cost_claim() -> CheckResult:
    for n in (2, 4, 8):
        cfg = DrisConfig(n=n)
        rep = cost_report(64, 128, cfg, [])
        if rep.coarse_cell_ops * n * n != rep.full_res_cell_ops:
            return CheckResult("dris_cost", False, f"n={n} mismatch")
    return CheckResult("dris_cost", True, "1/n^2 exact for n in {2,4,8}")


def _check_schedule() -> CheckResult:
    cfg = TrainConfig()
    ok = (lr_at(100, cfg) == 3e-4 and lr_at(1000, cfg) == 0.0
          and lr_at(550, cfg) == 3e-4 * (1000 - 550) / 900)
    return CheckResult("schedule_spots", ok, "lr_at(100/550/1000)")


def _check_serialization(n: int) -> CheckResult:
    rng = np.random.default_rng(11)
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(n):
            h, w, c = rng.integers(1, 9, size=3)
            grid = FeatureGrid(rng.normal(size=(h, w, c)).astype(np.float32)
                               .astype(np.float64))
            path = Path(tmp) / f"g{i}.fgrd"
            write_grid(path, grid)
            if not np.array_equal(read_grid(path).data, grid.data):
                return CheckResult("serialization", False, f"FGRD mismatch {i}")
            params = {"a": rng.normal(size=(3, 4)).astype(np.float32),
                      "b": rng.normal(size=5).astype(np.float32)}
            ck = Path(tmp) / f"c{i}.tvlm"
            save_checkpoint(ck, params)
            loaded = load_checkpoint(ck)
            for k in params:
                if params[k].tobytes() != loaded[k].astype(np.float32).tobytes():
                    return CheckResult("serialization", False, f"TVLM mismatch {i}")
    return CheckResult("serialization", True, f"{n} round-trips bit-exact")


def _check_roi_behavior() -> CheckResult:
    rng = np.random.default_rng(3)
    for _ in range(20):
        heat = np.abs(rng.normal(size=(10, 12, 1))) + 0.01
        cfg = DrisConfig(k=3, sigma=1.5, roi_size=(3, 3))
        base = select_rois(FeatureGrid(heat), cfg)
        scaled = select_rois(FeatureGrid(heat * 7.5), cfg)
        if base != scaled:
            return CheckResult("roi_scale_invariance", False, "rescale changed ROIs")
    return CheckResult("roi_scale_invariance", True, "20 maps")


def run_selfcheck(corrupt_gradient: bool = False,
                  n_gradient: int = 10, n_bounds: int = 200
                  ) -> Tuple[List[CheckResult], bool]:
    results = [
        _check_gradients(n_gradient, corrupt_gradient),
        _check_bounds(n_bounds),
        _check_metric_identities(),
        _check_cost_claim(),
        _check_schedule(),
        _check_serialization(20),
        _check_roi_behavior(),
    ]
    return results, all(r.ok for r in results)
