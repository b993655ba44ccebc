"""
Event maps and edge maps on a synthetic eye
===========================================

The ROI predictor looks at two cheap cues: where the image changed since the
last frame (an event map) and where the previous segmentation had class
boundaries (an edge map). This script renders a short synthetic sequence and
prints both cues as ASCII art.
"""


from edar.core import PipelineConfig, roi_to_pixels
from edar.edge import seg_edge_map
from edar.event import downsample_by_2, event_density, event_map
from edar.synth import EyeSceneParams, render_sequence, trajectory

# A 64x64 eye that drifts and makes frequent saccades.
params = EyeSceneParams(seed=7, saccade_rate=0.3, saccade_magnitude=5.0)
seq = render_sequence(params, 12)
traj = trajectory(params, 12)
print("saccades at frames", traj.saccades)


def show(bits, on="#", off="."):
    for row in bits:
        print("".join(on if b else off for b in row))


# %%
# The event map thresholds the relative intensity change per pixel.
# With the default sigma of 0.30 the sensor noise never fires, while the
# moving pupil edge does.
cfg = PipelineConfig()
t = traj.saccades[0] if traj.saccades else 1
prev, curr = seq[t - 1][0], seq[t][0]
events = event_map(prev, curr, cfg.sigma, cfg.epsilon_div)
print(f"\nframe {t}: {int(events.bits.sum())} events")
show(downsample_by_2(events).bits)

# %%
# Event density inside the ground-truth box of the previous frame is what the
# pipeline compares against gamma to decide whether to skip segmentation.

rect = roi_to_pixels(seq[t - 1][2], 64, 64)
print("density inside previous ROI:", round(event_density(events, rect), 4))

# %%
# The edge map comes from running Canny on the class-ID map itself.
edges = seg_edge_map(seq[t - 1][1])
print(f"\nedge map of frame {t - 1} ({int(edges.bits.sum())} edge pixels)")
show(downsample_by_2(edges).bits)

# %%
# A static scene produces no events at all.
still = render_sequence(EyeSceneParams(seed=7, noise_sigma=0, drift_amplitude=0, saccade_rate=0,
                                       blink_rate=0), 3)
print("\nstatic scene events:", int(event_map(still[0][0], still[1][0]).bits.sum()))
print("event counts across sigma:",
      {s: int(event_map(prev, curr, s).bits.sum()) for s in (0.15, 0.3, 0.6, 0.9)})
