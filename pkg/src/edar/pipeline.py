"""Per-frame Auto-ROI state machine with event/edge feedback.

Each frame is handled in one of three modes:

* ``extrapolate``: too little activity inside the predicted ROI, the previous
  segmentation is reused as is;
* ``roi``: only the predicted ROI is segmented and pasted onto a background
  canvas;
* ``full``: the whole frame is segmented (first frame, unusable prediction,
  or no previous ROI to predict from).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BACKGROUND, BinaryMap, Frame, Mode, PipelineConfig, Roi, SegmentationMap, foreground_bbox,
    rect_area, roi_to_pixels,
)
from .edge import seg_edge_map
from .event import downsample_by_2, event_map
from .nn.graph import LayerGraph
from .pupil import evaluate
from .roinet import decide_mode, predict_roi
from .segnet import SIZE_MULTIPLE, segment_batch

MODES = (Mode.EXTRAPOLATE, Mode.ROI_SEGMENT, Mode.FULL_RESOLUTION)


@dataclass
class Counters:
    modes: dict = field(default_factory=lambda: {m.value: 0 for m in MODES})
    pixels_processed: int = 0
    frames: int = 0
    full_pixels: int = 0  # pixels per full-resolution frame


@dataclass
class PipelineState:
    prev_frame: Frame | None = None
    prev_seg: SegmentationMap | None = None
    prev_roi: Roi | None = None
    prev_edge: BinaryMap | None = None
    counters: Counters = field(default_factory=Counters)


@dataclass
class FrameOutput:
    seg: SegmentationMap
    roi: Roi | None  # predicted ROI, or the fresh bounding box after a full-frame pass
    mode: Mode
    state: PipelineState
    event_density: float | None = None
    rect: tuple | None = None  # pixel box segmented in ROI mode (before padding)
    processed_pixels: int = 0
    timings: dict = field(default_factory=dict)


def _pad_crop(pixels: np.ndarray, multiple: int) -> np.ndarray:
    h, w = pixels.shape
    return np.pad(pixels, ((0, -h % multiple), (0, -w % multiple)))


def _check_pad_multiple(multiple: int):
    if multiple % SIZE_MULTIPLE:
        raise ValueError(f"roi_pad_multiple must be a multiple of {SIZE_MULTIPLE}, got {multiple}")


def segment_full(segnet: LayerGraph, frame: Frame, multiple: int = SIZE_MULTIPLE):
    """Segment a whole frame, padding odd sizes; returns (map, frame area)."""
    h, w = frame.shape
    padded = _pad_crop(frame.pixels, multiple)
    classes = segment_batch(segnet, padded[None])[0, :h, :w]
    return SegmentationMap(classes), h * w


def segment_roi(segnet: LayerGraph, frame: Frame, rect, multiple: int = SIZE_MULTIPLE):
    """Segment the crop ``rect`` and paste it onto a background canvas; returns (map, crop area)."""
    x0, y0, x1, y1 = rect
    crop = frame.pixels[y0:y1, x0:x1]
    padded = _pad_crop(crop, multiple)
    classes = segment_batch(segnet, padded[None])[0, :y1 - y0, :x1 - x0]
    canvas = np.full(frame.shape, BACKGROUND, dtype=np.uint8)
    canvas[y0:y1, x0:x1] = classes
    return SegmentationMap(canvas), rect_area(rect)


def _edges(seg: SegmentationMap, config: PipelineConfig) -> BinaryMap:
    return seg_edge_map(seg, config.edge_low, config.edge_high, config.edge_blur_sigma)


def process_frame(state: PipelineState, frame: Frame, config: PipelineConfig,
                  roinet: LayerGraph | None, segnet: LayerGraph) -> FrameOutput:
    """Advance the pipeline by one frame. ``roinet=None`` forces full-frame processing."""
    _check_pad_multiple(config.roi_pad_multiple)
    if state.prev_frame is not None and state.prev_frame.shape != frame.shape:
        raise ValueError(f"frame {frame.index} is {frame.shape}, earlier frames were {state.prev_frame.shape}")
    timings = {}
    counters = state.counters
    if counters.full_pixels == 0:
        counters.full_pixels = frame.width * frame.height
    t0 = time.perf_counter()
    pred = None
    mode = Mode.FULL_RESOLUTION
    if roinet is not None and state.prev_frame is not None and state.prev_roi is not None:
        events = event_map(state.prev_frame, frame, config.sigma, config.epsilon_div)
        ev_ds = downsample_by_2(events)
        ed_ds = downsample_by_2(state.prev_edge)
        timings["event"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        pred = predict_roi(roinet, ev_ds, ed_ds, state.prev_roi, full_events=events, gamma=config.gamma)
        mode = decide_mode(pred, config.gamma)
        timings["roinet"] = time.perf_counter() - t1
    rect = None
    if mode is Mode.ROI_SEGMENT:
        rect = roi_to_pixels(pred.roi.clamped(), frame.width, frame.height)
        if rect_area(rect) == 0:
            # a feasible but degenerate box contains nothing to segment
            mode, rect = Mode.FULL_RESOLUTION, None

    t2 = time.perf_counter()
    processed = 0
    edge = state.prev_edge
    if mode is Mode.EXTRAPOLATE:
        seg = state.prev_seg
        roi = pred.roi
    else:
        if mode is Mode.ROI_SEGMENT:
            seg, processed = segment_roi(segnet, frame, rect, config.roi_pad_multiple)
            roi = pred.roi
        else:
            seg, processed = segment_full(segnet, frame, config.roi_pad_multiple)
            roi = foreground_bbox(seg)
        timings["segnet"] = time.perf_counter() - t2
        t3 = time.perf_counter()
        edge = _edges(seg, config)
        timings["edge"] = time.perf_counter() - t3
    timings["total"] = time.perf_counter() - t0

    counters.modes[mode.value] += 1
    counters.pixels_processed += processed
    counters.frames += 1
    new_state = PipelineState(frame, seg, roi, edge, counters)
    return FrameOutput(seg, roi, mode, new_state, None if pred is None else pred.event_density,
                       rect, processed, timings)


@dataclass
class SequenceReport:
    frames: int
    modes: dict
    pixels_processed: int
    full_pixels: int
    processed_fraction_mean: float
    pixel_speedup_proxy: float
    config: dict
    metrics: dict | None = None
    timings: dict | None = None  # wall clock; excluded from to_dict() so reports stay reproducible

    def to_dict(self) -> dict:
        d = {
            "frames": self.frames,
            "modes": dict(self.modes),
            "mode_fractions": {k: v / self.frames for k, v in self.modes.items()},
            "pixels_processed": self.pixels_processed,
            "full_pixels": self.full_pixels,
            "processed_fraction_mean": self.processed_fraction_mean,
            "pixel_speedup_proxy": self.pixel_speedup_proxy,
            "config": self.config,
        }
        if self.metrics is not None:
            d["metrics"] = self.metrics
        return d


def pixel_speedup_proxy(report) -> float:
    """(full-frame pixels x frames) / pixels actually segmented."""
    if isinstance(report, SequenceReport):
        report = report.to_dict()
    processed = report["pixels_processed"]
    if processed == 0:
        return float("inf")
    return report["full_pixels"] * report["frames"] / processed


def run_sequence(frames, config: PipelineConfig, roinet: LayerGraph | None, segnet: LayerGraph,
                 labels=None, true_centers=None):
    """Stream ``frames`` through the pipeline.

    Returns (list of FrameOutput, SequenceReport). With ``labels`` the report
    carries mIoU and pupil metrics.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("empty sequence")
    state = PipelineState()
    outputs = []
    stage_totals: dict[str, float] = {}
    for f in frames:
        out = process_frame(state, f, config, roinet, segnet)
        state = out.state
        for k, v in out.timings.items():
            stage_totals[k] = stage_totals.get(k, 0.0) + v
        outputs.append(out)
    c = state.counters
    n = len(frames)
    report = SequenceReport(
        frames=n,
        modes=dict(c.modes),
        pixels_processed=c.pixels_processed,
        full_pixels=c.full_pixels,
        processed_fraction_mean=c.pixels_processed / (c.full_pixels * n),
        pixel_speedup_proxy=0.0,
        config=config.to_dict(),
        timings=stage_totals,
    )
    report.pixel_speedup_proxy = pixel_speedup_proxy(report)
    if labels is not None:
        result = evaluate([o.seg for o in outputs], list(labels), true_centers,
                          modes=[o.mode.value for o in outputs])
        report.metrics = result["summary"]
    return outputs, report
