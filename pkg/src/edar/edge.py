"""Canny edge detection and the segmentation-boundary feedback cue."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import BinaryMap, SegmentationMap

SEG_INTENSITY = np.array([0.0, 85.0, 170.0, 255.0])

# Defaults for class-ID maps: steps are >= 85 intensity units, so these sit
# well below the smallest boundary response and well above zero.
SEG_LOW, SEG_HIGH, SEG_BLUR = 20.0, 60.0, 1.0

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def gaussian_kernel(sigma: float, radius: int = 2) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def gradients(image: np.ndarray, blur_sigma: float) -> tuple[np.ndarray, np.ndarray]:
    img = np.asarray(image, dtype=np.float64)
    if blur_sigma > 0:
        g = gaussian_kernel(blur_sigma)
        img = ndimage.correlate1d(img, g, axis=0, mode="nearest")
        img = ndimage.correlate1d(img, g, axis=1, mode="nearest")
    gx = ndimage.correlate(img, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(img, _SOBEL_X.T, mode="nearest")
    return gx, gy


def non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are local maxima along the gradient (4 direction bins).

    Border pixels are always suppressed.
    """
    h, w = mag.shape
    out = np.zeros_like(mag)
    if h < 3 or w < 3:
        return out
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    m = np.pad(mag, 1)
    c = m[1:-1, 1:-1]
    # neighbour pairs along the gradient; y grows downward
    pairs = {
        0: (m[1:-1, 2:], m[1:-1, :-2]),
        45: (m[2:, 2:], m[:-2, :-2]),
        90: (m[2:, 1:-1], m[:-2, 1:-1]),
        135: (m[2:, :-2], m[:-2, 2:]),
    }
    bins = np.where((angle < 22.5) | (angle >= 157.5), 0,
                    np.where(angle < 67.5, 45, np.where(angle < 112.5, 90, 135)))
    keep = np.zeros_like(mag, dtype=bool)
    for b, (n1, n2) in pairs.items():
        sel = bins == b
        # ">=" on one side and ">" on the other thins plateaus to a single pixel
        keep |= sel & (c >= n1) & (c > n2)
    keep &= mag > 0
    out[keep] = mag[keep]
    out[0, :] = out[-1, :] = 0
    out[:, 0] = out[:, -1] = 0
    return out


def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = nms > low
    strong = nms > high
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros(nms.shape, dtype=np.uint8)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels].astype(np.uint8)


def canny(image, low: float, high: float, blur_sigma: float = 1.0) -> BinaryMap:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"canny needs a 2D image of at least 3x3, got {img.shape}")
    if not (0 < low <= high):
        raise ValueError("thresholds must satisfy 0 < low <= high")
    gx, gy = gradients(img, blur_sigma)
    mag = np.hypot(gx, gy)
    return BinaryMap(hysteresis(non_max_suppression(mag, gx, gy), low, high))


def seg_edge_map(seg: SegmentationMap, low: float = SEG_LOW, high: float = SEG_HIGH,
                 blur_sigma: float = SEG_BLUR) -> BinaryMap:
    h, w = seg.shape
    if h < 3 or w < 3:
        return BinaryMap(np.zeros((h, w), dtype=np.uint8))
    return canny(SEG_INTENSITY[seg.classes], low, high, blur_sigma)


def class_transitions(classes: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different class."""
    c = np.asarray(classes)
    t = np.zeros(c.shape, dtype=bool)
    dy = c[1:, :] != c[:-1, :]
    dx = c[:, 1:] != c[:, :-1]
    t[1:, :] |= dy
    t[:-1, :] |= dy
    t[:, 1:] |= dx
    t[:, :-1] |= dx
    return t
