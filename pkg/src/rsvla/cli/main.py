"""Command-line surface: dris, align, metrics, train, selfcheck.

Every command is deterministic given identical inputs, config, and seed,
and exits 0 only when no record-level or run-level error occurred. Reports
echo the full configuration for provenance.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .. import capmetrics as cm
from ..dris import channel_mean_saliency, run_pipeline
from ..errors import ShapeError, TrainingDivergedError
from ..gridcore import FeatureGrid, pool
from ..msvlam import (AlignBatch, BoxPair, LinearMap, align_loss,
                      object_features, region_features, spp)
from ..toyvlm import (generate_dataset, init_params, save_checkpoint, train)
from .config import RunConfig, load_config
from .embed import hash_text_embedding
from .formats import read_grid, write_grid
from .records import ingest, read_records
from .selfcheck import run_selfcheck


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _report_base(cfg: RunConfig) -> dict:
    return {"config": cfg.as_dict()}


def cmd_dris(cfg: RunConfig, data: Path, out: Path) -> int:
    grid = read_grid(data)
    result = run_pipeline(grid, channel_mean_saliency, cfg.to_dris())
    report = _report_base(cfg)
    report.update({
        "mask_high_cells": int(result.mask.high.sum()),
        "mask_cells": int(result.mask.high.size),
        "rois": [[r.row0, r.col0, r.row1, r.col1] for r in result.rois],
        "cost": {
            "full_res_cell_ops": result.cost.full_res_cell_ops,
            "coarse_cell_ops": result.cost.coarse_cell_ops,
            "fine_cell_ops": result.cost.fine_cell_ops,
            "savings_ratio": result.cost.savings_ratio,
            "exact_division": result.cost.exact_division,
        },
    })
    _write_json(out / "dris_report.json", report)
    write_grid(out / "fused.fgrd", result.fused)

    coarse = pool(grid, grid.height // cfg.n, grid.width // cfg.n, "average")
    saliency = channel_mean_saliency(coarse)
    with (out / "saliency.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "saliency"])
        for r in range(saliency.height):
            for c in range(saliency.width):
                writer.writerow([r, c, repr(float(saliency.data[r, c, 0]))])
    print(json.dumps({"command": "dris", "rois": len(result.rois),
                      "savings_ratio": result.cost.savings_ratio}))
    return 0


def _batch_from_record(grid: FeatureGrid, record, cfg: RunConfig) -> AlignBatch:
    rng = np.random.default_rng(cfg.seed)
    a = cfg.align_dim
    proj_obj = LinearMap.random(a, cfg.pool_size ** 2 * grid.channels, rng)
    proj_reg = LinearMap.random(a, grid.channels, rng)
    spp_len = sum(L * L for L in (1, 2, 4)) * grid.channels
    proj_spp = LinearMap.random(a, spp_len, rng)
    proj_txt = LinearMap.random(a, a, rng)

    obj_v = [e.values for e in object_features(grid, record.boxes, proj_obj,
                                               cfg.pool_size)]
    obj_t = [proj_txt.apply(hash_text_embedding(lbl, a, cfg.seed))
             for lbl in record.box_labels]
    pairs = [BoxPair(b, b) for b in record.boxes]
    reg_v = [e.values for e in region_features(grid, record.region_masks,
                                               proj_reg)]
    phrases = [proj_txt.apply(hash_text_embedding(p, a, cfg.seed))
               for p in record.phrases]
    g = spp(grid, (1, 2, 4), proj_spp).values
    t_cls = proj_txt.apply(hash_text_embedding(record.caption, a, cfg.seed))
    return AlignBatch(object_pairs=pairs, object_visual=obj_v,
                      object_text=obj_t, region_visual=reg_v, phrases=phrases,
                      positive_index=record.phrase_positive,
                      global_visual=g, global_text=t_cls)


def cmd_align(cfg: RunConfig, data: Path, out: Path) -> int:
    weights = cfg.to_align_weights()
    pairs = ingest(data, data.parent)
    items = []
    errors = []
    sums = {"l_obj": 0.0, "l_reg": 0.0, "l_glob": 0.0, "l_align": 0.0}
    for idx, (grid, record) in enumerate(pairs):
        try:
            batch = _batch_from_record(grid, record, cfg)
            bd = align_loss(batch, weights)
        except (ValueError, ShapeError) as exc:
            errors.append({"record": idx, "error": str(exc)})
            continue
        item = {"record": idx, "l_obj": bd.l_obj, "l_reg_hard": bd.l_reg_hard,
                "l_reg_nce": bd.l_reg_nce, "l_reg": bd.l_reg,
                "l_glob": bd.l_glob, "l_align": bd.l_align}
        items.append(item)
        for key in sums:
            sums[key] += item[key]
    report = _report_base(cfg)
    report["items"] = items
    report["errors"] = errors
    if items:
        report["aggregate"] = {k: v / len(items) for k, v in sums.items()}
    _write_json(out / "align_report.json", report)
    print(json.dumps({"command": "align", "items": len(items),
                      "errors": len(errors)}))
    return 0 if not errors else 1


def cmd_metrics(cfg: RunConfig, data: Path, out: Path) -> int:
    records = read_records(data)
    corpus = []
    for rec in records:
        refs = rec.references or [rec.caption]
        corpus.append(cm.RefSet.from_texts(refs))

    rows = []
    errors = []
    ranks = [cm.RankedRetrieval(rec.retrieval_rank) for rec in records
             if rec.retrieval_rank is not None]
    for idx, rec in enumerate(records):
        cand_text = rec.candidate if rec.candidate is not None else rec.caption
        candidate = cm.Caption.from_text(cand_text)
        if len(candidate) == 0:
            errors.append({"record": idx, "error": "empty candidate"})
            continue
        refset = corpus[idx]
        row = {"record": idx}
        for n in range(1, 5):
            row[f"bleu_{n}"] = cm.bleu(candidate, refset, n)
        row["meteor"] = max(cm.meteor(candidate, r) for r in refset.references)
        row["rouge_l"] = max(cm.rouge_l(candidate, r) for r in refset.references)
        raw_cider = cm.cider(candidate, refset, corpus)
        row["cider"] = raw_cider
        row["cider_x10"] = 10.0 * raw_cider
        if rec.triples is not None and rec.candidate_triples is not None:
            row["spice_f1"] = cm.spice_f1(rec.candidate_triples, rec.triples)
        rows.append(row)

    metric_keys = ["bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor",
                   "rouge_l", "cider", "cider_x10"]
    aggregate = {}
    if rows:
        for key in metric_keys:
            aggregate[key] = sum(r[key] for r in rows) / len(rows)
        spice_rows = [r["spice_f1"] for r in rows if "spice_f1" in r]
        aggregate["spice_f1"] = (sum(spice_rows) / len(spice_rows)
                                 if spice_rows else None)
    for k in (1, 5, 10):
        aggregate[f"recall_at_{k}"] = (cm.recall_at_k(ranks, k) if ranks
                                       else None)

    report = _report_base(cfg)
    report["items"] = rows
    report["errors"] = errors
    report["aggregate"] = aggregate
    _write_json(out / "metrics_report.json", report)

    # table mirrors the caption-metrics layout, 3 decimals
    header = metric_keys + ["spice_f1", "recall_at_1", "recall_at_5",
                            "recall_at_10"]
    line = []
    for key in header:
        val = aggregate.get(key)
        line.append("-" if val is None else f"{val:.3f}")
    table = "\t".join(header) + "\n" + "\t".join(line)
    (out / "metrics_table.txt").write_text(table + "\n")
    print(table)
    return 0 if not errors else 1


def cmd_train(cfg: RunConfig, out: Path) -> int:
    model_cfg = cfg.to_model()
    train_cfg = cfg.to_train()
    weights = cfg.to_align_weights()
    rng = np.random.default_rng(cfg.seed)
    params = init_params(model_cfg, rng)
    dataset = generate_dataset(cfg.dataset_size, model_cfg, cfg.seed + 1,
                               caption_len=cfg.caption_len)
    try:
        report = train(dataset, params, train_cfg, weights, model_cfg,
                       steps=cfg.run_steps)
    except TrainingDivergedError as exc:
        print(f"training diverged at step {exc.step}", file=sys.stderr)
        return 1

    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.tvlm", params)
    with (out / "losses.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "total", "caption", "align"])
        for i in range(report.steps):
            writer.writerow([i + 1, repr(report.lrs[i]),
                             repr(report.totals[i]), repr(report.captions[i]),
                             repr(report.aligns[i])])
    summary = _report_base(cfg)
    summary.update({
        "steps": report.steps,
        "first_total": report.totals[0],
        "last_total": report.totals[-1],
        "frozen_checksum_before": report.frozen_checksum_before,
        "frozen_checksum_after": report.frozen_checksum_after,
        "frozen_unchanged": (report.frozen_checksum_before
                             == report.frozen_checksum_after),
        "trainable_checksum_after": report.trainable_checksum_after,
    })
    _write_json(out / "train_report.json", summary)
    print(json.dumps({"command": "train", "steps": report.steps,
                      "last_total": report.totals[-1]}))
    return 0 if summary["frozen_unchanged"] else 1


def cmd_selfcheck(corrupt_gradient: bool = False) -> int:
    start = time.monotonic()
    results, ok = run_selfcheck(corrupt_gradient=corrupt_gradient)
    elapsed = time.monotonic() - start
    payload = {
        "checks": [{"name": r.name, "ok": r.ok, "detail": r.detail}
                   for r in results],
        "all_ok": ok,
        "elapsed_seconds": round(elapsed, 3),
    }
    print(json.dumps(payload, indent=2))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsvla",
        description="dynamic-resolution pipeline, alignment losses, toy "
                    "training, and caption metrics")
    parser.add_argument("--config", type=Path, default=None,
                        help="key=value configuration file")
    parser.add_argument("--data", type=Path, default=None,
                        help="input grid (dris) or JSONL annotations")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dris", help="run the coarse-to-fine input pipeline")
    sub.add_parser("align", help="score alignment losses over a dataset")
    sub.add_parser("metrics", help="caption and retrieval metric table")
    sub.add_parser("train", help="train the toy model on synthetic pairs")
    check = sub.add_parser("selfcheck", help="run the property suite")
    check.add_argument("--corrupt-gradient", action="store_true",
                       help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "dris":
            if args.data is None:
                raise FileNotFoundError("dris needs --data pointing at an FGRD grid")
            return cmd_dris(cfg, args.data, args.out)
        if args.command == "align":
            if args.data is None:
                raise FileNotFoundError("align needs --data pointing at JSONL annotations")
            return cmd_align(cfg, args.data, args.out)
        if args.command == "metrics":
            if args.data is None:
                raise FileNotFoundError("metrics needs --data pointing at JSONL annotations")
            return cmd_metrics(cfg, args.data, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.out)
        if args.command == "selfcheck":
            return cmd_selfcheck(getattr(args, "corrupt_gradient", False))
        raise ValueError(f"unknown command {args.command!r}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
