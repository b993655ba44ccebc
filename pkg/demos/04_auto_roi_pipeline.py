"""
The Auto-ROI pipeline on a moving eye
=====================================

Each frame is either extrapolated (previous map reused), segmented inside a
predicted box, or segmented at full resolution. This script streams a held-out
sequence through the pipeline, prints the per-frame decisions and sweeps the
extrapolation threshold gamma.

Run 03_train_desk_scale.py first; its weights are read from demos/out.
"""

import sys
from pathlib import Path

from edar.core import PipelineConfig
from edar.pipeline import run_sequence
from edar.roinet import load_roinet
from edar.segnet import load_segnet
from edar.synth import EyeSceneParams, render_sequence

weights = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out"
seg = load_segnet(weights / "segnet.edarw")
roi = load_roinet(weights / "roinet.edarw")

rend = render_sequence(EyeSceneParams.random(1000), 64)
frames, labels, centers = [r[0] for r in rend], [r[1] for r in rend], [r[3] for r in rend]

outputs, report = run_sequence(frames, PipelineConfig(), roi, seg, labels, centers)
print("".join({"extrapolate": "e", "roi": "r", "full": "F"}[o.mode.value] for o in outputs))
print("modes", report.modes)
print(f"pixel speedup {report.pixel_speedup_proxy:.2f}x, mIoU {report.metrics['miou_mean']:.3f}, "
      f"pupil error {report.metrics['pupil_error_mean']:.3f}px")

# %%
# The same sequence segmented at full resolution on every frame, for reference.
_, full = run_sequence(frames, PipelineConfig(), None, seg, labels, centers)
print(f"full-frame baseline mIoU {full.metrics['miou_mean']:.3f}")

# %%
# Raising gamma trades accuracy for more skipped frames.
for gamma in (0.0, 1e-3, 1e-2, 5e-2):
    _, r = run_sequence(frames, PipelineConfig(gamma=gamma), roi, seg, labels, centers)
    print(f"gamma {gamma:<7} extrapolated {r.modes['extrapolate']:>2}/64  speedup {r.pixel_speedup_proxy:5.2f}x"
          f"  mIoU {r.metrics['miou_mean']:.3f}")
