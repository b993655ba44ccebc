"""Domain types shared by the pipeline, plus ROI geometry helpers.

Coordinates: origin top-left, x to the right, y downward. Pixel rectangles
are half-open, ``(x0, y0, x1, y1)`` covers columns ``x0..x1-1`` and rows
``y0..y1-1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

BACKGROUND, SCLERA, IRIS, PUPIL = 0, 1, 2, 3
NUM_CLASSES = 4

Rect = tuple[int, int, int, int]

# floor/ceil snapping tolerance for values like 0.11 * 100 = 11.000000000000002
_SNAP = 1e-9


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """8-bit grayscale image, ``pixels`` has shape (height, width)."""

    pixels: np.ndarray
    index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError(f"frame must be a non-empty 2D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any((px < 0) | (px > 255)):
                raise ValueError("frame pixels must lie in [0, 255]")
        if self.index < 0:
            raise ValueError("frame index must be non-negative")
        object.__setattr__(self, "pixels", _frozen(px, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True, eq=False)
class BinaryMap:
    """One bit per pixel (stored one byte per element). Used for events and edges."""

    bits: np.ndarray
    downsampled: bool = False

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"binary map must be 2D, got shape {b.shape}")
        if b.dtype != bool and b.size and not np.all((b == 0) | (b == 1)):
            raise ValueError("binary map elements must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(b, np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class SegmentationMap:
    """Per-pixel class IDs: 0 background, 1 sclera, 2 iris, 3 pupil."""

    classes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.classes)
        if c.ndim != 2:
            raise ValueError(f"segmentation map must be 2D, got shape {c.shape}")
        if c.size and (c.min() < 0 or c.max() >= NUM_CLASSES):
            raise ValueError("class IDs must lie in {0, 1, 2, 3}")
        object.__setattr__(self, "classes", _frozen(c, np.uint8))

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    def __eq__(self, other):
        if not isinstance(other, SegmentationMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.classes, other.classes))


@dataclass(frozen=True)
class Roi:
    """Normalized box. Unvalidated on purpose: raw network outputs may be unordered."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def clamped(self) -> "Roi":
        c = [min(max(float(v), 0.0), 1.0) for v in self.as_tuple()]
        return Roi(*c)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    @property
    def area(self) -> float:
        return max(self.x_max - self.x_min, 0.0) * max(self.y_max - self.y_min, 0.0)

    @classmethod
    def from_array(cls, a) -> "Roi":
        a = [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]
        if len(a) != 4:
            raise ValueError("ROI needs exactly four values")
        return cls(*a)


class Mode(str, Enum):
    EXTRAPOLATE = "extrapolate"
    ROI_SEGMENT = "roi"
    FULL_RESOLUTION = "full"


@dataclass
class PipelineConfig:
    sigma: float = 0.30
    gamma: float = 0.001
    epsilon_div: float = 1.0
    seg_variant: str = "S"
    roi_pad_multiple: int = 16
    rng_seed: int = 0
    edge_low: float = 20.0
    edge_high: float = 60.0
    edge_blur_sigma: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not self.epsilon_div > 0:
            raise ValueError("epsilon_div must be positive")
        if self.seg_variant not in ("S", "L"):
            raise ValueError("seg_variant must be 'S' or 'L'")
        if self.roi_pad_multiple < 1:
            raise ValueError("roi_pad_multiple must be >= 1")
        if not 0 < self.edge_low <= self.edge_high:
            raise ValueError("edge thresholds must satisfy 0 < low <= high")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _snap_floor(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.floor(v)


def _snap_ceil(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.ceil(v)


def roi_to_pixels(roi: Roi, width: int, height: int) -> Rect:
    """Smallest pixel rectangle enclosing ``roi`` on a ``width`` x ``height`` image."""
    x0 = min(max(_snap_floor(roi.x_min * width), 0), width)
    y0 = min(max(_snap_floor(roi.y_min * height), 0), height)
    x1 = min(max(_snap_ceil(roi.x_max * width), 0), width)
    y1 = min(max(_snap_ceil(roi.y_max * height), 0), height)
    return (x0, y0, max(x0, x1), max(y0, y1))


def pixels_to_roi(rect: Rect, width: int, height: int) -> Roi:
    x0, y0, x1, y1 = rect
    return Roi(x0 / width, y0 / height, x1 / width, y1 / height)


def roi_is_feasible(roi: Roi) -> bool:
    vals = roi.as_tuple()
    if not all(math.isfinite(v) for v in vals):
        return False
    return roi.x_min <= roi.x_max and roi.y_min <= roi.y_max


def rect_area(rect: Rect) -> int:
    x0, y0, x1, y1 = rect
    return max(x1 - x0, 0) * max(y1 - y0, 0)


def _check_rect(rect: Rect, width: int, height: int):
    x0, y0, x1, y1 = rect
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ValueError(f"rectangle {rect} is empty or outside a {width}x{height} image")


def crop(frame: Frame, rect: Rect) -> Frame:
    _check_rect(rect, frame.width, frame.height)
    x0, y0, x1, y1 = rect
    return Frame(frame.pixels[y0:y1, x0:x1].copy(), frame.index)


def foreground_bbox(seg: SegmentationMap) -> Roi | None:
    """Tight normalized box around all non-background pixels, or None if there are none."""
    fg = seg.classes != BACKGROUND
    rows = np.flatnonzero(fg.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(fg.any(axis=0))
    h, w = seg.shape
    return pixels_to_roi((int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1), w, h)


def roi_iou(a: Roi, b: Roi) -> float:
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0
