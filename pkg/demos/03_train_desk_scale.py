"""
Training both networks at desk scale
====================================

The three training phases run on synthetic 64x64 sequences: the
segmentation net on full frames, the ROI net on (event map, edge map,
previous box) triples, then a short fine-tune of the segmentation net on
crops chosen by the frozen ROI net.

This is a reduced run (a couple of minutes on one core). The acceptance
suite uses 40 sequences and a few more epochs.
"""

import sys
from pathlib import Path

import numpy as np

from edar.nn import save_weights
from edar.pupil import evaluate
from edar.roinet import build_roinet
from edar.segnet import build_segnet, segment_batch
from edar.core import SegmentationMap
from edar.synth import EyeSceneParams, render_sequence
from edar.train import LabeledSequence, finetune_segnet_on_rois, train_roinet, train_segnet

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out"
out.mkdir(parents=True, exist_ok=True)

n_seq = 16
train = [LabeledSequence.from_rendered(render_sequence(EyeSceneParams.random(s), 64)) for s in range(n_seq)]
print(f"{n_seq} training sequences of 64 frames")

# %%
# Phase 1: cross-entropy on every 8th frame, best-validation weights kept.
seg = build_segnet("S").initialize(0)
res = train_segnet(seg, train, epochs=12, lr=3e-3, stride=8)
print("segnet loss", [round(tr, 3) for _, tr, _ in res.curve])

# %%
# Phase 2: mean squared error on the four box coordinates.
roi = build_roinet(input_size=(32, 32)).initialize(0)
res = train_roinet(roi, train, epochs=12, stride=2)
print("roinet loss", [round(tr, 4) for _, tr, _ in res.curve])

# %%
# Phase 3: fine-tune on predicted crops at a lower learning rate.
res = finetune_segnet_on_rois(seg, roi, train, epochs=3, lr=1e-4, stride=8)
print("finetune loss", [round(tr, 3) for _, tr, _ in res.curve])

save_weights(seg, out / "segnet.edarw")
save_weights(roi, out / "roinet.edarw")
print("weights written to", out)

# %%
# Held-out check on full frames.
held = render_sequence(EyeSceneParams.random(500), 64)
pred = segment_batch(seg, np.stack([r[0].pixels for r in held]))
summary = evaluate([SegmentationMap(p) for p in pred], [r[1] for r in held], [r[3] for r in held])["summary"]
print(f"held-out mIoU {summary['miou_mean']:.3f}, pupil error {summary['pupil_error_mean']:.3f}px")
