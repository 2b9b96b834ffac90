"""Train the toy model for 200 steps on synthetic pairs, then score a few
captions with the sentence-level metrics.

Only the vocab head, alignment projector, and retrieval-token embedding
move; everything else stays byte-identical, which the report checksums
confirm.
"""
import numpy as np

from rsvla import capmetrics as cm
from rsvla.msvlam import AlignWeights
from rsvla.toyvlm import (ToyModelConfig, TrainConfig, generate_dataset,
                          init_params, train)

model_cfg = ToyModelConfig()
params = init_params(model_cfg, np.random.default_rng(0))
dataset = generate_dataset(32, model_cfg, seed=1, caption_len=12)

report = train(dataset, params, TrainConfig(), AlignWeights(), model_cfg,
               steps=200)
early = float(np.mean(report.totals[10:20]))
late = float(np.mean(report.totals[-10:]))
print(f"steps: {report.steps}")
print(f"total loss: first={report.totals[0]:.3f} last={report.totals[-1]:.3f}")
print(f"mean(steps 10-20)={early:.3f}  mean(last 10)={late:.3f}  "
      f"ratio={late / early:.3f}")
print(f"frozen groups unchanged: "
      f"{report.frozen_checksum_before == report.frozen_checksum_after}")

candidate = cm.Caption.from_text("two planes parked on the tarmac")
refs = cm.RefSet.from_texts(["two planes parked on the gray tarmac",
                             "aircraft sitting on a runway"])
corpus = [refs,
          cm.RefSet.from_texts(["a river winds through green farmland"]),
          cm.RefSet.from_texts(["boats docked at a small marina"])]
print(f"BLEU-4  = {cm.bleu(candidate, refs, 4):.4f}")
print(f"METEOR  = {max(cm.meteor(candidate, r) for r in refs.references):.4f}")
print(f"ROUGE-L = {max(cm.rouge_l(candidate, r) for r in refs.references):.4f}")
print(f"CIDEr   = {cm.cider(candidate, refs, corpus):.4f}")
