import math

import numpy as np
import pytest
from scipy import ndimage

from edar.core import IRIS, PUPIL, SCLERA, SegmentationMap
from edar.event import event_map
from edar.synth import EyeSceneParams, fill_holes, refine_groundtruth, render_sequence, trajectory
from oracles import noisy_map, refine_oracle


def static_params(**kw):
    base = dict(noise_sigma=0.0, drift_amplitude=0.0, saccade_rate=0.0, blink_rate=0.0, seed=4)
    base.update(kw)
    return EyeSceneParams(**base)


def test_static_scene_has_no_events():
    seq = render_sequence(static_params(), 12)
    for (a, *_), (b, *_) in zip(seq, seq[1:]):
        assert np.array_equal(a.pixels, b.pixels)
        assert not event_map(a, b).bits.any()


def test_blink_clears_foreground():
    p = static_params(blink_rate=50.0, blink_duration=6)
    seq = render_sequence(p, 20)
    traj = trajectory(p, 20)
    closed = [t for t in range(20) if traj.apertures[t] == 0]
    assert closed
    for t in closed:
        _, seg, roi, center = seq[t]
        assert not seg.classes.any()
        assert roi is None and center is None


def test_saccade_moves_roi_center():
    p = EyeSceneParams(width=160, height=120, sclera_center=(80, 60), sclera_axes=(14, 8), iris_radius=6,
                       drift_amplitude=0.0, saccade_rate=0.3, saccade_magnitude=20.0, blink_rate=0.0,
                       noise_sigma=0.0, seed=11)
    n = 30
    seq = render_sequence(p, n)
    traj = trajectory(p, n)
    checked = 0
    for t in traj.saccades:
        step = traj.offsets[t] - traj.offsets[t - 1]
        if abs(np.hypot(*step) - 20) > 1e-9:
            continue  # clamped at the frame edge
        r0, r1 = seq[t - 1][2], seq[t][2]
        moved = np.array([(r1.center[0] - r0.center[0]) * p.width, (r1.center[1] - r0.center[1]) * p.height])
        # bounding boxes live on the pixel grid, so allow one pixel of rounding
        assert np.all(np.abs(moved - step) <= 1.0)
        assert abs(np.hypot(*moved) - 20) <= 1.5
        checked += 1
    assert checked >= 3


@pytest.mark.parametrize("seed", range(20))
def test_class_nesting(seed):
    p = EyeSceneParams.random(seed)
    seq = render_sequence(p, 16)
    traj = trajectory(p, 16)
    for t, (_, seg, _, _) in enumerate(seq):
        c = seg.classes
        cx = p.sclera_center[0] + traj.offsets[t][0]
        cy = p.sclera_center[1] + traj.offsets[t][1]
        ix, iy = cx + p.iris_offset[0], cy + p.iris_offset[1]
        yy, xx = np.mgrid[0:p.height, 0:p.width]
        ca, sa = math.cos(p.sclera_angle), math.sin(p.sclera_angle)
        u = ca * (xx - cx) + sa * (yy - cy)
        v = -sa * (xx - cx) + ca * (yy - cy)
        in_sclera = (u / p.sclera_axes[0]) ** 2 + (v / p.sclera_axes[1]) ** 2 <= 1
        in_iris = (xx - ix) ** 2 + (yy - iy) ** 2 <= p.iris_radius ** 2
        in_pupil = (xx - ix) ** 2 + (yy - iy) ** 2 <= (p.iris_radius * p.pupil_fraction) ** 2
        assert np.all(in_pupil[c == PUPIL])
        assert np.all(in_iris[(c == PUPIL) | (c == IRIS)])
        assert np.all(in_sclera[c > 0])
        assert np.all(c[c == SCLERA] == SCLERA)


def test_seed_determinism():
    p = EyeSceneParams.random(3)
    a = render_sequence(p, 10)
    b = render_sequence(EyeSceneParams.from_dict(p.to_dict()), 10)
    for x, y in zip(a, b):
        assert np.array_equal(x[0].pixels, y[0].pixels) and x[1] == y[1] and x[2] == y[2] and x[3] == y[3]


def test_infeasible_geometry():
    with pytest.raises(ValueError):
        EyeSceneParams(sclera_axes=(40, 11)).validate()
    with pytest.raises(ValueError):
        EyeSceneParams(iris_radius=15).validate()
    with pytest.raises(ValueError):
        render_sequence(EyeSceneParams(), 0)


def test_labels_exact_noise_only_on_frames():
    p = EyeSceneParams(noise_sigma=5.0, seed=1)
    q = EyeSceneParams(noise_sigma=0.0, seed=1)
    a, b = render_sequence(p, 3), render_sequence(q, 3)
    for x, y in zip(a, b):
        assert x[1] == y[1]
    assert not np.array_equal(a[0][0].pixels, b[0][0].pixels)


# -- refinement ---------------------------------------------------------------

def _clean(seed=0):
    return render_sequence(EyeSceneParams(noise_sigma=0, seed=seed), 1)[0][1].classes


def test_refine_clean_map_unchanged():
    c = _clean()
    assert np.array_equal(refine_groundtruth(SegmentationMap(c)).classes, c)


def test_refine_removes_far_blob():
    c = np.zeros((80, 80), np.uint8)
    c[10:35, 10:30] = SCLERA  # 500 px
    c[70:72, 70:72] = IRIS
    c[72, 70] = IRIS  # 5-px blob
    out = refine_groundtruth(SegmentationMap(c)).classes
    assert not out[60:, 60:].any()
    assert np.array_equal(out[:40, :40], c[:40, :40])


def test_refine_fills_small_hole():
    c = np.zeros((40, 40), np.uint8)
    c[8:32, 6:34] = SCLERA
    c[12:28, 12:28] = IRIS
    hole = [(20, 20), (20, 21), (21, 20)]
    for p in hole:
        c[p] = 0
    out = refine_groundtruth(SegmentationMap(c)).classes
    assert all(out[p] == IRIS for p in hole)
    assert np.count_nonzero(out != c) == 3


def test_refine_empty_and_all_noise():
    z = SegmentationMap(np.zeros((10, 10), np.uint8))
    assert refine_groundtruth(z) == z
    sparse = np.zeros((30, 30), np.uint8)
    sparse[::10, ::10] = PUPIL
    assert not refine_groundtruth(SegmentationMap(sparse)).classes.any()


def test_fill_holes_ignores_border_regions():
    c = np.ones((6, 6), np.uint8)
    c[0, 2] = 0
    c[3, 3] = 0
    out = fill_holes(c)
    assert out[0, 2] == 0 and out[3, 3] == 1


@pytest.mark.parametrize("seed", range(15))
def test_refine_matches_oracles(seed):
    c = noisy_map(seed)
    assert np.array_equal(refine_groundtruth(SegmentationMap(c)).classes, refine_oracle(c))


@pytest.mark.parametrize("seed", range(15))
def test_refine_idempotent_and_never_adds_components(seed):
    c = noisy_map(seed)
    once = refine_groundtruth(SegmentationMap(c))
    assert refine_groundtruth(once) == once
    _, before = ndimage.label(c > 0)
    _, after = ndimage.label(once.classes > 0)
    assert after <= before


def test_random_params_always_valid():
    for s in range(200):
        EyeSceneParams.random(s).validate()
