"""Software event-camera emulation from consecutive grayscale frames."""
from __future__ import annotations

import numpy as np

from .core import BinaryMap, Frame, Rect, rect_area


def event_map(prev: Frame, curr: Frame, sigma: float = 0.30, epsilon_div: float = 1.0) -> BinaryMap:
    """Mark pixels whose change relative to the previous intensity exceeds ``sigma``.

    The ratio |prev - curr| / prev stands in for a log-intensity difference.
    The denominator is guarded with ``epsilon_div`` so black pixels stay defined;
    ties at exactly ``sigma`` do not fire.
    """
    if prev.shape != curr.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {curr.shape}")
    p = prev.pixels.astype(np.float64)
    c = curr.pixels.astype(np.float64)
    ratio = np.abs(p - c) / np.maximum(p, epsilon_div)
    return BinaryMap(ratio > sigma)


def event_density(events: BinaryMap, rect: Rect) -> float:
    area = rect_area(rect)
    if area == 0:
        raise ValueError(f"zero-area rectangle {rect}")
    x0, y0, x1, y1 = rect
    if not (0 <= x0 and 0 <= y0 and x1 <= events.width and y1 <= events.height):
        raise ValueError(f"rectangle {rect} outside a {events.width}x{events.height} map")
    return float(events.bits[y0:y1, x0:x1].sum()) / area


def downsample_by_2(m: BinaryMap) -> BinaryMap:
    """2x2 OR pooling; odd trailing rows/columns form partial blocks."""
    b = m.bits
    h, w = b.shape
    hp, wp = -(-h // 2) * 2, -(-w // 2) * 2
    padded = np.zeros((hp, wp), dtype=np.uint8)
    padded[:h, :w] = b
    pooled = padded.reshape(hp // 2, 2, wp // 2, 2).max(axis=(1, 3))
    return BinaryMap(pooled, downsampled=True)
