"""
Cleaning label maps and locating the pupil
==========================================

Noisy label maps are cleaned by keeping the largest DBSCAN cluster of
foreground pixels and filling enclosed holes. The pupil center is then the
center of an ellipse fitted to the pupil boundary.
"""

import numpy as np

from edar.core import PUPIL, SegmentationMap
from edar.pupil import fit_ellipse, pupil_center
from edar.synth import EyeSceneParams, refine_groundtruth, render_sequence

rng = np.random.default_rng(3)
_, seg, _, center = render_sequence(EyeSceneParams(seed=3), 1)[0]
noisy = seg.classes.copy()
ys, xs = rng.integers(0, 64, 30), rng.integers(0, 64, 30)
noisy[ys, xs] = rng.integers(1, 4, 30)  # stray specks
fg = np.argwhere(noisy > 0)
for y, x in fg[rng.choice(len(fg), 15, replace=False)]:
    noisy[y, x] = 0  # dropped pixels

clean = refine_groundtruth(SegmentationMap(noisy))
print("pixels differing from the exact labels: noisy", int((noisy != seg.classes).sum()),
      "refined", int((clean.classes != seg.classes).sum()))

# %%
# Ellipse fit on exact points recovers the parameters to rounding error.
t = np.linspace(0, 2 * np.pi, 20, endpoint=False)
a, b, ang = 8.0, 3.0, np.radians(30)
pts = np.column_stack([10 + a * np.cos(t) * np.cos(ang) - b * np.sin(t) * np.sin(ang),
                       -4 + a * np.cos(t) * np.sin(ang) + b * np.sin(t) * np.cos(ang)])
print("fitted ellipse", fit_ellipse(pts))

# %%
# On a rasterized pupil the fit lands within a fraction of a pixel.
got = pupil_center(clean)
print(f"true center ({center[0]:.2f}, {center[1]:.2f}), estimate ({got[0]:.2f}, {got[1]:.2f}), "
      f"{int((clean.classes == PUPIL).sum())} pupil pixels")
