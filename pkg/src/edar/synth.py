"""Synthetic near-eye sequences with exact labels, and label-map cleanup.

The eye is a sclera ellipse holding concentric iris and pupil disks, drawn
over a fixed skin texture. The whole eye translates along a trajectory of
slow sinusoidal drift plus sudden saccade jumps, and blinks sweep the
eyelids shut and open again.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from sklearn.cluster import DBSCAN

from .core import BACKGROUND, IRIS, PUPIL, SCLERA, Frame, SegmentationMap, foreground_bbox


@dataclass
class EyeSceneParams:
    width: int = 64
    height: int = 64
    sclera_center: tuple[float, float] = (32.0, 32.0)  # (x, y) at rest
    sclera_axes: tuple[float, float] = (20.0, 11.0)  # semi-axes along / across the eye
    sclera_angle: float = 0.0  # radians
    iris_radius: float = 8.0
    iris_offset: tuple[float, float] = (0.0, 0.0)  # iris center relative to sclera center
    pupil_fraction: float = 0.45  # pupil radius / iris radius
    aperture: float = 1.0  # eyelid opening when not blinking
    drift_amplitude: float = 2.0  # px
    drift_period: float = 48.0  # frames
    saccade_rate: float = 0.04  # expected saccades per frame
    saccade_magnitude: float = 6.0  # px
    blink_rate: float = 0.01  # expected blink onsets per frame
    blink_duration: int = 6  # frames from open through closed to open
    noise_sigma: float = 1.0
    skin_level: float = 150.0
    sclera_level: float = 220.0
    iris_level: float = 100.0
    pupil_level: float = 35.0
    seed: int = 0

    def validate(self):
        rx, ry = self.sclera_axes
        if self.width < 8 or self.height < 8:
            raise ValueError("image must be at least 8x8")
        if min(rx, ry) <= 0:
            raise ValueError("sclera axes must be positive")
        if not 0 < self.pupil_fraction < 1:
            raise ValueError("pupil radius must be smaller than the iris radius")
        if not 0 < self.iris_radius < min(rx, ry):
            raise ValueError("iris radius must be smaller than both sclera semi-axes")
        ox, oy = self.iris_offset
        # the iris disk must stay inside the sclera ellipse
        c, s = math.cos(self.sclera_angle), math.sin(self.sclera_angle)
        u, v = c * ox + s * oy, -s * ox + c * oy
        if (abs(u) + self.iris_radius) / rx > 1 or (abs(v) + self.iris_radius) / ry > 1:
            raise ValueError("iris disk does not fit inside the sclera ellipse")
        if not 0 <= self.aperture <= 1:
            raise ValueError("aperture must lie in [0, 1]")
        if self.blink_duration < 2:
            raise ValueError("blink_duration must be at least 2 frames")
        if min(self.saccade_rate, self.blink_rate, self.noise_sigma, self.drift_amplitude) < 0:
            raise ValueError("rates, amplitudes and noise must be non-negative")
        if self.drift_period <= 0:
            raise ValueError("drift_period must be positive")
        m = self.margin()
        cx, cy = self.sclera_center
        if not (m[0] <= cx <= self.width - 1 - m[0] and m[1] <= cy <= self.height - 1 - m[1]):
            raise ValueError("sclera ellipse does not fit inside the image")

    def margin(self) -> tuple[float, float]:
        """Half extents of the sclera ellipse's bounding box."""
        rx, ry = self.sclera_axes
        c, s = math.cos(self.sclera_angle), math.sin(self.sclera_angle)
        return math.hypot(rx * c, ry * s), math.hypot(rx * s, ry * c)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EyeSceneParams":
        d = dict(d)
        for k in ("sclera_center", "sclera_axes", "iris_offset"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def random(cls, seed: int, width: int = 64, height: int = 64, **overrides) -> "EyeSceneParams":
        """Plausible eye geometry and shading drawn from ``seed``."""
        rng = np.random.default_rng(seed)
        scale = min(width, height) / 64
        rx = rng.uniform(16, 22) * scale
        ry = rng.uniform(0.5, 0.65) * rx
        iris = rng.uniform(0.55, 0.8) * ry
        room = ry - iris
        p = dict(
            width=width, height=height,
            sclera_axes=(rx, ry),
            sclera_angle=float(rng.uniform(-0.25, 0.25)),
            iris_radius=iris,
            iris_offset=(float(rng.uniform(-0.5, 0.5) * (rx - iris)), float(rng.uniform(-0.4, 0.4) * room)),
            pupil_fraction=float(rng.uniform(0.3, 0.55)),
            sclera_center=(width / 2 + rng.uniform(-3, 3) * scale, height / 2 + rng.uniform(-3, 3) * scale),
            skin_level=float(rng.uniform(120, 170)),
            sclera_level=float(rng.uniform(200, 235)),
            iris_level=float(rng.uniform(80, 120)),
            pupil_level=float(rng.uniform(30, 45)),
            seed=int(seed),
        )
        p.update(overrides)
        return cls(**p)


@dataclass
class Trajectory:
    """Per-frame eye offset from rest (x, y), eyelid aperture, and saccade frames."""

    offsets: np.ndarray
    apertures: np.ndarray
    saccades: list[int] = field(default_factory=list)


def trajectory(params: EyeSceneParams, n_frames: int) -> Trajectory:
    rng = np.random.default_rng([params.seed, 1])
    mx, my = params.margin()
    cx, cy = params.sclera_center
    # admissible offsets keep the whole ellipse inside the frame
    lo = np.array([mx - cx, my - cy])
    hi = np.array([params.width - 1 - mx - cx, params.height - 1 - my - cy])
    phase = rng.uniform(0, 2 * np.pi, size=2)
    jump = np.zeros(2)
    offsets = np.zeros((n_frames, 2))
    apertures = np.full(n_frames, float(params.aperture))
    saccades = []
    p_sacc = 1 - math.exp(-params.saccade_rate)
    p_blink = 1 - math.exp(-params.blink_rate)
    blink_left = 0
    d = params.blink_duration
    for t in range(n_frames):
        drift = params.drift_amplitude * np.sin(2 * np.pi * t / params.drift_period * np.array([1.0, 0.7]) + phase)
        if t > 0 and rng.random() < p_sacc:
            ang = rng.uniform(0, 2 * np.pi)
            jump = jump + params.saccade_magnitude * np.array([math.cos(ang), math.sin(ang)])
            saccades.append(t)
        jump = np.clip(jump, lo - drift, hi - drift)
        offsets[t] = np.clip(drift + jump, lo, hi)
        if blink_left == 0 and t > 0 and rng.random() < p_blink:
            blink_left = d
        if blink_left:
            k = d - blink_left + 1  # 1..d
            apertures[t] = params.aperture * abs(1 - 2 * k / d)
            blink_left -= 1
    return Trajectory(offsets, apertures, saccades)


def _skin(params: EyeSceneParams) -> np.ndarray:
    rng = np.random.default_rng([params.seed, 2])
    h, w = params.height, params.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    g = rng.normal(size=2)
    img = params.skin_level + 12 * (g[0] * (xx / w - 0.5) + g[1] * (yy / h - 0.5))
    for _ in range(6):
        bx, by = rng.uniform(0, w), rng.uniform(0, h)
        r = rng.uniform(2, 6) * min(w, h) / 64
        img += rng.uniform(-18, 18) * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * r * r))
    return img


def render_labels(params: EyeSceneParams, offset, aperture: float) -> np.ndarray:
    """Exact class map for the eye displaced by ``offset`` with the given lid opening."""
    h, w = params.height, params.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx = params.sclera_center[0] + offset[0]
    cy = params.sclera_center[1] + offset[1]
    rx, ry = params.sclera_axes
    c, s = math.cos(params.sclera_angle), math.sin(params.sclera_angle)
    u = c * (xx - cx) + s * (yy - cy)
    v = -s * (xx - cx) + c * (yy - cy)
    sclera = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    # eyelids: both lids close symmetrically across the eye's short axis
    sclera &= np.abs(v) < aperture * ry
    ix, iy = cx + params.iris_offset[0], cy + params.iris_offset[1]
    d2 = (xx - ix) ** 2 + (yy - iy) ** 2
    r_pupil = params.iris_radius * params.pupil_fraction
    labels = np.zeros((h, w), dtype=np.uint8)
    labels[sclera] = SCLERA
    labels[sclera & (d2 <= params.iris_radius ** 2)] = IRIS
    labels[sclera & (d2 <= r_pupil ** 2)] = PUPIL
    return labels


def render_frame(params: EyeSceneParams, labels: np.ndarray, skin: np.ndarray, rng) -> np.ndarray:
    img = skin.copy()
    img[labels == SCLERA] = params.sclera_level
    img[labels == IRIS] = params.iris_level
    img[labels == PUPIL] = params.pupil_level
    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_sequence(params: EyeSceneParams, n_frames: int):
    """List of (Frame, SegmentationMap, Roi or None, pupil center (x, y) or None)."""
    params.validate()
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    traj = trajectory(params, n_frames)
    skin = _skin(params)
    noise_rng = np.random.default_rng([params.seed, 3])
    out = []
    for t in range(n_frames):
        labels = render_labels(params, traj.offsets[t], traj.apertures[t])
        seg = SegmentationMap(labels)
        frame = Frame(render_frame(params, labels, skin, noise_rng), t)
        center = None
        if traj.apertures[t] >= params.aperture and (labels == PUPIL).any():
            center = (params.sclera_center[0] + traj.offsets[t][0] + params.iris_offset[0],
                      params.sclera_center[1] + traj.offsets[t][1] + params.iris_offset[1])
        out.append((frame, seg, foreground_bbox(seg), center))
    return out


def params_json(params: EyeSceneParams) -> str:
    return json.dumps(params.to_dict(), indent=2, sort_keys=True)


# -- label refinement -------------------------------------------------------------

def _largest_cluster(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Boolean mask of points in the largest DBSCAN cluster.

    Border points count towards (and join) every cluster owning a core point
    within ``eps``, so the result does not depend on visiting order.
    """
    db = DBSCAN(eps=eps, min_samples=min_pts).fit(points)
    labels = db.labels_
    if labels.max() < 0:
        return np.zeros(len(points), dtype=bool)
    core = np.zeros(len(points), dtype=bool)
    core[db.core_sample_indices_] = True
    border = ~core
    tree = cKDTree(points)
    reach = eps * (1 + 1e-9)
    best_size, best_kept = -1, None
    for lab in range(labels.max() + 1):
        kept_core = core & (labels == lab)
        near = tree.query_ball_point(points[kept_core], reach)
        claimed = np.zeros(len(points), dtype=bool)
        claimed[np.concatenate([np.asarray(n, dtype=int) for n in near])] = True
        claimed &= border
        size = int(kept_core.sum() + claimed.sum())
        if size > best_size:  # ties -> lowest cluster id
            best_size, best_kept = size, kept_core | claimed
    return best_kept


def fill_holes(classes: np.ndarray) -> np.ndarray:
    """Fill background regions not touching the border with their boundary's majority class."""
    out = classes.copy()
    holes, n = ndimage.label(classes == BACKGROUND)  # 4-connected
    if n == 0:
        return out
    border = np.unique(np.concatenate([holes[0], holes[-1], holes[:, 0], holes[:, -1]]))
    cross = ndimage.generate_binary_structure(2, 1)
    for lab, sl in enumerate(ndimage.find_objects(holes), 1):
        if lab in border:
            continue
        # pad the slice by one pixel to see the ring around the hole
        y0, y1 = max(sl[0].start - 1, 0), sl[0].stop + 1
        x0, x1 = max(sl[1].start - 1, 0), sl[1].stop + 1
        mask = holes[y0:y1, x0:x1] == lab
        ring = ndimage.binary_dilation(mask, cross) & ~mask
        counts = np.bincount(classes[y0:y1, x0:x1][ring], minlength=4)
        counts[BACKGROUND] = 0
        out[y0:y1, x0:x1][mask] = int(np.argmax(counts))  # ties -> lowest class id
    return out


def refine_groundtruth(seg: SegmentationMap, eps: float = 3.0, min_pts: int = 5) -> SegmentationMap:
    """Keep the largest spatial cluster of foreground pixels, then fill enclosed holes."""
    classes = seg.classes.copy()
    ys, xs = np.nonzero(classes != BACKGROUND)
    if ys.size == 0:
        return seg
    keep = _largest_cluster(np.column_stack([xs, ys]).astype(np.float64), eps, min_pts)
    classes[ys[~keep], xs[~keep]] = BACKGROUND
    return SegmentationMap(fill_holes(classes))

