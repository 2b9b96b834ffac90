"""Line-delimited JSON annotation records and their ingestion.

Each record carries externally produced artifacts (detector boxes, region
masks, phrases, optional triples and retrieval ranks); nothing here is
computed from pixels. Region masks travel run-length encoded: alternating
run lengths over the flattened mask, starting with a zero-run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..capmetrics import TripleSet
from ..gridcore import FeatureGrid, Roi
from ..msvlam import RegionMask
from .formats import read_grid


@dataclass
class AnnotationRecord:
    image_path: str
    caption: str
    boxes: List[Roi] = field(default_factory=list)
    box_labels: List[str] = field(default_factory=list)
    region_masks: List[RegionMask] = field(default_factory=list)
    phrases: List[str] = field(default_factory=list)
    phrase_positive: List[int] = field(default_factory=list)
    triples: Optional[TripleSet] = None
    candidate_triples: Optional[TripleSet] = None
    retrieval_rank: Optional[int] = None
    candidate: Optional[str] = None
    references: Optional[List[str]] = None


def rle_encode(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel()
    runs: List[int] = []
    current = False
    count = 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = bool(v)
            count = 1
    runs.append(count)
    return {"height": mask.shape[0], "width": mask.shape[1], "runs": runs}


def rle_decode(spec: dict) -> np.ndarray:
    h, w, runs = spec["height"], spec["width"], spec["runs"]
    if sum(runs) != h * w:
        raise ValueError(f"RLE runs sum to {sum(runs)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if run < 0:
            raise ValueError("negative run length")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)


def parse_record(obj: dict, where: str) -> AnnotationRecord:
    try:
        boxes = [Roi(*b) for b in obj.get("boxes", [])]
        labels = list(obj.get("box_labels", []))
        if len(boxes) != len(labels):
            raise ValueError(f"{len(boxes)} boxes but {len(labels)} labels")
        masks = [RegionMask(rle_decode(m)) for m in obj.get("region_masks", [])]
        phrases = list(obj.get("phrases", []))
        positive = [int(i) for i in obj.get("phrase_positive", [])]
        if len(positive) != len(masks):
            raise ValueError(f"{len(masks)} masks but {len(positive)} "
                             "positive indices")
        for idx in positive:
            if not 0 <= idx < len(phrases):
                raise ValueError(f"phrase index {idx} out of range")
        triples = None
        if obj.get("triples") is not None:
            triples = TripleSet.of(*[tuple(t) for t in obj["triples"]])
        cand_triples = None
        if obj.get("candidate_triples") is not None:
            cand_triples = TripleSet.of(*[tuple(t)
                                          for t in obj["candidate_triples"]])
        rank = obj.get("retrieval_rank")
        if rank is not None and int(rank) < 1:
            raise ValueError("retrieval_rank must be >= 1")
        return AnnotationRecord(
            image_path=obj["image_path"], caption=obj.get("caption", ""),
            boxes=boxes, box_labels=labels, region_masks=masks,
            phrases=phrases, phrase_positive=positive, triples=triples,
            candidate_triples=cand_triples,
            retrieval_rank=None if rank is None else int(rank),
            candidate=obj.get("candidate"),
            references=obj.get("references"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{where}: invalid record: {exc}") from exc


def read_records(annotations_path) -> List[AnnotationRecord]:
    records = []
    path = Path(annotations_path)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: JSON parse failure: {exc}") from exc
        records.append(parse_record(obj, f"{path}:{lineno}"))
    return records


def ingest(annotations_path, grids_dir) -> List[Tuple[FeatureGrid, AnnotationRecord]]:
    """Load (grid, record) pairs in file order; fails with indexed diagnostics."""
    out = []
    grids_dir = Path(grids_dir)
    for idx, record in enumerate(read_records(annotations_path)):
        grid_path = grids_dir / record.image_path
        if not grid_path.exists():
            raise FileNotFoundError(f"record {idx}: missing grid {grid_path}")
        out.append((read_grid(grid_path), record))
    return out


def write_records(path, records: List[dict]) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")
