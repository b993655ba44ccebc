"""Depthwise-separable U-Net for four-class eye segmentation, S and L variants."""
from __future__ import annotations

import numpy as np

from .core import Frame, SegmentationMap
from .nn.graph import LayerGraph
from .nn.weights import load_weights, read_metadata

# Per encoder stage: (depthwise width, pointwise output width). The decoder
# mirrors stages 4..1. S halves every depthwise width and keeps 3/4 of the
# pointwise widths.
WIDTHS = {
    "L": ((32, 32, 32, 96, 160), (16, 16, 16, 48, 80)),
    "S": ((16, 16, 16, 48, 80), (12, 12, 12, 36, 60)),
}
SIZE_MULTIPLE = 16
NUM_CLASSES = 4


def _block(g: LayerGraph, x: str, dw_width: int, out_width: int, p: str) -> str:
    a = g.conv(x, dw_width, 1, f"{p}.expand")
    a = g.act(a, "leaky_relu", f"{p}.expand.act")
    a = g.dwconv(a, f"{p}.dw")
    a = g.act(a, "leaky_relu", f"{p}.dw.act")
    a = g.conv(a, out_width, 1, f"{p}.project")
    skip = x if g.node(x).channels == out_width else g.conv(x, out_width, 1, f"{p}.skip")
    h = g.add(a, skip, f"{p}.sum")
    return g.act(h, "leaky_relu", f"{p}.out")


def network_name(variant: str) -> str:
    return f"segnet-{variant.lower()}-v1"


def build_segnet(variant: str = "S", widths=None) -> LayerGraph:
    if widths is None:
        if variant not in WIDTHS:
            raise ValueError(f"unknown variant {variant!r}; expected 'S' or 'L'")
        widths = WIDTHS[variant]
    dws, pws = widths
    g = LayerGraph(network_name(variant))
    g.meta = {"variant_L": float(variant == "L")}
    x = g.input("image", 1)
    skips = []
    for i, (d, p) in enumerate(zip(dws, pws)):
        if i > 0:
            x = g.maxpool(x, f"down{i + 1}.pool")
        x = _block(g, x, d, p, f"down{i + 1}")
        skips.append(x)
    for j, level in enumerate(range(len(dws) - 2, -1, -1)):
        x = g.upsample(x, f"up{j + 1}.upsample")
        x = g.concat(x, skips[level], f"up{j + 1}.concat")
        x = _block(g, x, dws[level], pws[level], f"up{j + 1}")
    x = g.conv(x, NUM_CLASSES, 1, "head")
    g.logits = x
    g.act(x, "softmax", "probs")
    return g


def load_segnet(path) -> LayerGraph:
    name, cfg = read_metadata(path)
    variant = "L" if cfg.get("variant_L", 0.0) == 1.0 else "S"
    if name != network_name(variant):
        raise ValueError(f"{path}: unexpected network {name!r}")
    return load_weights(build_segnet(variant), path)


def frames_to_input(pixels: np.ndarray) -> np.ndarray:
    """(N, H, W) uint8 -> (N, 1, H, W) floats in [0, 1]."""
    return np.asarray(pixels, dtype=np.float64)[:, None] / 255.0


def check_dims(height: int, width: int):
    if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
        raise ValueError(f"segmentation input {width}x{height} is not a multiple of {SIZE_MULTIPLE}")


def segment_batch(net: LayerGraph, pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels)
    check_dims(*pixels.shape[1:])
    probs = net.forward(frames_to_input(pixels))
    return probs.argmax(axis=1).astype(np.uint8)  # ties -> lowest class index


def segment(net: LayerGraph, frame: Frame) -> SegmentationMap:
    return SegmentationMap(segment_batch(net, frame.pixels[None])[0])
