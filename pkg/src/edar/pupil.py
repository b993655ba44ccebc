"""Pupil localization by ellipse fitting, and segmentation/pupil metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import IRIS, NUM_CLASSES, PUPIL, SegmentationMap

MIN_FIT_PIXELS = 20


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float  # semi-major
    b: float  # semi-minor
    angle: float  # of the major axis, radians in [0, pi)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)


class DegenerateFitError(ValueError):
    pass


def _conic_to_ellipse(A, B, C, D, E, F) -> Ellipse:
    M = np.array([[2 * A, B], [B, 2 * C]])
    if abs(np.linalg.det(M)) < 1e-300:
        raise DegenerateFitError("conic has no unique center")
    x0, y0 = np.linalg.solve(M, [-D, -E])
    f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F
    lam, vec = np.linalg.eigh(np.array([[A, B / 2], [B / 2, C]]))
    axes = -f0 / lam
    if not np.all(axes > 0):
        raise DegenerateFitError("fitted conic is not a real ellipse")
    semi = np.sqrt(axes)
    i = int(np.argmax(semi))
    vx, vy = vec[:, i]
    angle = math.atan2(vy, vx) % math.pi
    if math.isclose(semi[0], semi[1], rel_tol=1e-9):
        angle = 0.0
    elif math.isclose(angle, math.pi):
        angle = 0.0
    return Ellipse(float(x0), float(y0), float(semi[i]), float(semi[1 - i]), float(angle))


def fit_ellipse(points) -> Ellipse:
    """Direct least-squares ellipse fit (constraint 4AC - B^2 = 1).

    Uses the block decomposition of Halir and Flusser, which avoids the
    singular scatter matrix of the original formulation on exact data.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of (x, y)")
    if len(pts) < 6:
        raise DegenerateFitError(f"need at least 6 points, got {len(pts)}")
    # normalize for conditioning, undone on the conic below
    mx, my = pts.mean(axis=0)
    s = np.sqrt(((pts - (mx, my)) ** 2).sum(axis=1).mean())
    if not s > 0:
        raise DegenerateFitError("all points coincide")
    x = (pts[:, 0] - mx) / s
    y = (pts[:, 1] - my) / s
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    if np.linalg.cond(S3) > 1e12:
        raise DegenerateFitError("points are collinear")
    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    M = np.array([M[2] / 2, -M[1], M[0] / 2])
    w, v = np.linalg.eig(M)
    v = np.real(v)
    cond = 4 * v[0] * v[2] - v[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if ok.size == 0:
        raise DegenerateFitError("no elliptical solution")
    a1 = v[:, ok[np.argmin(np.abs(np.real(w[ok])))]]
    A, B, C = a1
    Dn, En, Fn = T @ a1
    # substitute x' = (x - mx)/s, y' = (y - my)/s back into the conic
    A2, B2, C2 = A / s**2, B / s**2, C / s**2
    D2_ = Dn / s - 2 * A2 * mx - B2 * my
    E2_ = En / s - 2 * C2 * my - B2 * mx
    F2_ = A2 * mx * mx + B2 * mx * my + C2 * my * my - Dn * mx / s - En * my / s + Fn
    return _conic_to_ellipse(A2, B2, C2, D2_, E2_, F2_)


def _largest_component(mask: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(mask, structure=np.ones((3, 3)))
    if n <= 1:
        return mask
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (int(np.argmax(sizes)) + 1)


def _boundary_points(mask: np.ndarray, neighbour: np.ndarray | None = None) -> np.ndarray:
    """Midpoints between mask pixels and their 4-neighbours outside the mask.

    With ``neighbour`` given, only edges whose outside pixel is in it count.
    """
    h, w = mask.shape
    pad = np.pad(mask, 1)
    nb = np.ones((h + 2, w + 2), dtype=bool) if neighbour is None else np.pad(neighbour, 1)
    pts = []
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        out = ~pad[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx] & nb[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
        ys, xs = np.nonzero(mask & out)
        pts.append(np.column_stack([xs + dx / 2, ys + dy / 2]))
    return np.concatenate(pts)


def pupil_center(seg: SegmentationMap) -> tuple[float, float] | None:
    """Center of the pupil region, or None when no pupil pixel is present.

    The largest pupil blob's outline is fitted with an ellipse. Outline
    segments facing the iris are preferred because eyelid cuts are straight
    and would bias the fit. Small or badly shaped blobs fall back to the
    centroid.
    """
    mask = seg.classes == PUPIL
    count = int(mask.sum())
    if count == 0:
        return None
    if count < MIN_FIT_PIXELS:
        ys, xs = np.nonzero(mask)
        return (float(xs.mean()), float(ys.mean()))
    mask = _largest_component(mask)
    ys, xs = np.nonzero(mask)
    centroid = (float(xs.mean()), float(ys.mean()))
    candidates = [_boundary_points(mask, seg.classes == IRIS), _boundary_points(mask)]
    for pts in candidates:
        if len(pts) < 12:
            continue
        try:
            e = fit_ellipse(pts)
        except DegenerateFitError:
            continue
        # a sane fit stays within the blob's extent
        if xs.min() - 1 <= e.cx <= xs.max() + 1 and ys.min() - 1 <= e.cy <= ys.max() + 1:
            return (e.cx, e.cy)
    return centroid


def miou(pred: SegmentationMap, truth: SegmentationMap) -> float:
    """Mean IoU over classes present in either map."""
    if pred.shape != truth.shape:
        raise ValueError(f"map shapes differ: {pred.shape} vs {truth.shape}")
    p, t = pred.classes, truth.classes
    ious = []
    for c in range(NUM_CLASSES):
        pc, tc = p == c, t == c
        union = np.count_nonzero(pc | tc)
        if union:
            ious.append(np.count_nonzero(pc & tc) / union)
    return float(np.mean(ious))


def pupil_error(pred_center, true_center) -> float | None:
    """Euclidean distance in pixels; None when exactly one side is missing."""
    if pred_center is None and true_center is None:
        return 0.0
    if pred_center is None or true_center is None:
        return None
    return float(math.hypot(pred_center[0] - true_center[0], pred_center[1] - true_center[1]))


def evaluate(preds, truths, true_centers=None, modes=None) -> dict:
    """Per-frame and aggregate metrics for one sequence.

    ``true_centers`` defaults to ``pupil_center`` of the truth maps.
    """
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions for {len(truths)} ground-truth frames")
    if true_centers is None:
        true_centers = [pupil_center(t) for t in truths]
    frames = []
    errs = []
    mismatched = 0
    for i, (p, t) in enumerate(zip(preds, truths)):
        pc = pupil_center(p)
        e = pupil_error(pc, true_centers[i])
        if e is None:
            mismatched += 1
        elif true_centers[i] is not None:
            errs.append(e)
        row = {"frame": i, "miou": miou(p, t), "pupil_error": e}
        if modes is not None:
            row["mode"] = modes[i]
        frames.append(row)
    m = [r["miou"] for r in frames]
    summary = {
        "frames": len(frames),
        "miou_mean": float(np.mean(m)) if m else None,
        "pupil_error_mean": float(np.mean(errs)) if errs else None,
        "pupil_error_std": float(np.std(errs)) if errs else None,
        "pupil_frames": len(errs),
        "pupil_presence_mismatches": mismatched,
    }
    if modes is not None:
        summary["modes"] = {k: int(sum(1 for x in modes if x == k)) for k in ("extrapolate", "roi", "full")}
    return {"summary": summary, "per_frame": frames}
