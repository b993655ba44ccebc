"""
Networks, FLOPs and a gradient check
====================================

Both networks are built from a small NumPy layer graph. This script prints
their parameter and FLOP budgets at the 640x400 sensor resolution and checks
one backward pass against finite differences.
"""

import numpy as np

from edar.nn import flops
from edar.roinet import build_roinet
from edar.segnet import build_segnet

for variant in ("S", "L"):
    net = build_segnet(variant)
    f = flops(net, {"image": (1, 400, 640)})
    print(f"segnet-{variant}: {net.param_count():,} params, {f / 1e9:.2f} GFLOPs at 640x400")

roi = build_roinet(input_size=(200, 320))
f = flops(roi, {"maps": (2, 200, 320), "prev_roi": (4,)})
print(f"roinet: {roi.param_count():,} params, {f / 1e6:.1f} MFLOPs on 320x200 maps")

# %%
# Where do the segmentation FLOPs go? The full-resolution stages dominate.
net = build_segnet("S")
rows = sorted(net.layer_flops({"image": (1, 400, 640)}), key=lambda r: -r[2])[:5]
for name, kind, n in rows:
    print(f"  {name:<20}{kind:<8}{n / 1e6:8.1f} MFLOPs")

# %%
# Gradient check on a tiny segmentation net: perturb a few weights and compare
# the loss change with the analytic gradient.
rng = np.random.default_rng(0)
tiny = build_segnet("S", widths=((3, 4, 5), (2, 3, 4))).initialize(1)
x = rng.uniform(size=(1, 1, 16, 16))
target = rng.normal(size=(1, 4, 16, 16))


def loss():
    return float((tiny.forward(x) * target).sum())


loss()
grads = tiny.backward(target)
worst = 0.0
for name in ("down1.expand.w", "up2.dw.w", "head.b"):
    p = tiny.params[name]
    idx = tuple(rng.integers(0, s) for s in p.shape)
    old = p[idx]
    p[idx] = old + 1e-5
    fp = loss()
    p[idx] = old - 1e-5
    fm = loss()
    p[idx] = old
    num = (fp - fm) / 2e-5
    worst = max(worst, abs(num - grads[name][idx]) / max(abs(num), 1e-8))
    print(f"  {name}{list(idx)}: analytic {grads[name][idx]: .6e} numeric {num: .6e}")
print("worst relative error", f"{worst:.1e}")
