"""ROI prediction network, extrapolation decision and feasibility gate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMap, Mode, Roi, rect_area, roi_is_feasible, roi_to_pixels
from .event import event_density
from .nn.graph import LayerGraph
from .nn.weights import load_weights, read_metadata

NETWORK_NAME = "roinet-v1"
DEFAULT_CHANNELS = (8, 16, 16)
DEFAULT_FC_HIDDEN = 64


@dataclass(frozen=True)
class RoiPrediction:
    roi: Roi
    feasible: bool
    event_density: float
    extrapolate: bool


def build_roinet(channels=DEFAULT_CHANNELS, fc_hidden: int = DEFAULT_FC_HIDDEN,
                 input_size: tuple[int, int] = (32, 32)) -> LayerGraph:
    """``input_size`` is the (height, width) of the downsampled event/edge maps."""
    c1, c2, c3 = channels
    if min(c1, c2, c3, fc_hidden) <= 0:
        raise ValueError("channel counts must be positive")
    h, w = input_size
    g = LayerGraph(NETWORK_NAME)
    g.meta = {"c1": c1, "c2": c2, "c3": c3, "fc_hidden": fc_hidden, "input_h": h, "input_w": w}
    x = g.input("maps", 2)
    prev = g.input("prev_roi", 4, spatial=False)
    for i, c in enumerate(channels, 1):
        x = g.conv(x, c, 3, f"conv{i}")
        x = g.act(x, "leaky_relu", f"conv{i}.act")
        x = g.maxpool(x, f"pool{i}")
        h, w = -(-h // 2), -(-w // 2)
    x = g.flatten(x, c3 * h * w, "flatten")
    x = g.concat(x, prev, "with_prev_roi")
    x = g.fc(x, fc_hidden, "fc1")
    x = g.act(x, "leaky_relu", "fc1.act")
    x = g.fc(x, 4, "fc2")
    g.act(x, "sigmoid", "roi")
    return g


def input_size(net: LayerGraph) -> tuple[int, int]:
    return int(net.meta["input_h"]), int(net.meta["input_w"])


def load_roinet(path) -> LayerGraph:
    name, cfg = read_metadata(path)
    if name != NETWORK_NAME:
        raise ValueError(f"{path}: expected {NETWORK_NAME!r}, found {name!r}")
    net = build_roinet((int(cfg["c1"]), int(cfg["c2"]), int(cfg["c3"])), int(cfg["fc_hidden"]),
                       (int(cfg["input_h"]), int(cfg["input_w"])))
    return load_weights(net, path)


def make_inputs(events_ds: np.ndarray, edges_ds: np.ndarray, prev_rois: np.ndarray) -> dict:
    """Batch arrays (N, h, w), (N, h, w), (N, 4) -> graph feeds."""
    maps = np.stack([events_ds, edges_ds], axis=1).astype(np.float64)
    return {"maps": maps, "prev_roi": np.asarray(prev_rois, dtype=np.float64).reshape(-1, 4)}


def density_in_roi(events: BinaryMap, roi: Roi) -> float:
    """Event density inside the clamped ROI; an empty pixel box has no activity."""
    rect = roi_to_pixels(roi.clamped(), events.width, events.height)
    if rect_area(rect) == 0:
        return 0.0
    return event_density(events, rect)


def predict_roi(net: LayerGraph, events_ds: BinaryMap, edges_ds: BinaryMap, prev_roi: Roi,
                full_events: BinaryMap | None = None, gamma: float = 0.001) -> RoiPrediction:
    if events_ds.shape != edges_ds.shape:
        raise ValueError(f"event map {events_ds.shape} and edge map {edges_ds.shape} differ")
    if events_ds.shape != input_size(net):
        raise ValueError(f"network expects {input_size(net)} maps, got {events_ds.shape}")
    feeds = make_inputs(events_ds.bits[None], edges_ds.bits[None], np.array(prev_roi.as_tuple()))
    roi = Roi.from_array(net.forward(feeds)[0])
    feasible = roi_is_feasible(roi)
    density = density_in_roi(full_events if full_events is not None else events_ds, roi) if feasible else 0.0
    return RoiPrediction(roi, feasible, density, density < gamma)


def decide_mode(pred: RoiPrediction, gamma: float) -> Mode:
    if not pred.feasible:
        return Mode.FULL_RESOLUTION
    if pred.event_density < gamma:
        return Mode.EXTRAPOLATE
    return Mode.ROI_SEGMENT
