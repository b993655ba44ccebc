import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edar.core import BinaryMap, Frame
from edar.event import downsample_by_2, event_density, event_map


def event_map_oracle(prev, curr, sigma, eps):
    """Straight per-pixel loop over the thresholded relative change."""
    h, w = prev.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            p, c = float(prev[y, x]), float(curr[y, x])
            out[y, x] = 1 if abs(p - c) / max(p, eps) > sigma else 0
    return out


def F(a):
    return Frame(np.array(a, dtype=np.uint8))


def test_event_map_examples():
    a = F([[100, 50], [200, 10]])
    assert not event_map(a, a).bits.any()
    m = event_map(a, F([[140, 50], [100, 10]]), 0.3)
    assert m.bits.tolist() == [[1, 0], [1, 0]]
    m = event_map(F(np.zeros((3, 4))), F(np.full((3, 4), 255)), 0.3, 1.0)
    assert m.bits.all()


def test_event_map_tie_does_not_fire():
    # 130 vs 100 is exactly a 0.3 change
    assert event_map(F([[100]]), F([[130]]), 0.3).bits[0, 0] == 0
    assert event_map(F([[100]]), F([[131]]), 0.3).bits[0, 0] == 1


def test_event_map_shape_mismatch():
    with pytest.raises(ValueError):
        event_map(F(np.zeros((2, 3))), F(np.zeros((3, 2))))


@pytest.mark.parametrize("seed", range(10))
def test_event_map_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 20, size=2)
    prev = rng.integers(0, 256, (h, w), dtype=np.uint8)
    curr = np.clip(prev + rng.integers(-80, 80, (h, w)), 0, 255).astype(np.uint8)
    sigma = float(rng.choice([0.05, 0.15, 0.3, 0.6]))
    got = event_map(Frame(prev), Frame(curr), sigma).bits
    assert np.array_equal(got, event_map_oracle(prev, curr, sigma, 1.0))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 2), st.floats(0.01, 2))
def test_event_map_monotone_in_sigma(seed, s1, s2):
    rng = np.random.default_rng(seed)
    prev = Frame(rng.integers(0, 256, (8, 8), dtype=np.uint8))
    curr = Frame(rng.integers(0, 256, (8, 8), dtype=np.uint8))
    lo, hi = sorted((s1, s2))
    a = event_map(prev, curr, lo).bits
    b = event_map(prev, curr, hi).bits
    assert np.all(b <= a)


def test_event_density_examples():
    z = BinaryMap(np.zeros((20, 20), np.uint8))
    assert event_density(z, (0, 0, 20, 20)) == 0.0
    b = np.zeros((20, 20), np.uint8)
    b[[1, 3, 5, 7, 9], [2, 4, 6, 8, 0]] = 1
    b[15, 15] = 1  # outside the rect
    assert event_density(BinaryMap(b), (0, 0, 10, 10)) == 0.05
    assert event_density(BinaryMap(np.ones((4, 4), np.uint8)), (1, 1, 3, 4)) == 1.0
    with pytest.raises(ValueError):
        event_density(z, (3, 3, 3, 9))
    with pytest.raises(ValueError):
        event_density(z, (0, 0, 21, 5))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_event_density_additive(seed):
    rng = np.random.default_rng(seed)
    m = BinaryMap((rng.random((12, 16)) < 0.3).astype(np.uint8))
    x0, x1 = sorted(rng.choice(np.arange(17), 2, replace=False))
    y0, y1 = sorted(rng.choice(np.arange(13), 2, replace=False))
    xm = int(rng.integers(x0 + 1, x1 + 1)) if x1 - x0 > 1 else x1
    whole = event_density(m, (x0, y0, x1, y1))
    parts = [(x0, y0, xm, y1), (xm, y0, x1, y1)]
    total = sum(event_density(m, r) * (r[2] - r[0]) * (r[3] - r[1]) for r in parts if r[2] > r[0])
    assert whole == pytest.approx(total / ((x1 - x0) * (y1 - y0)))


def test_downsample_examples():
    z = downsample_by_2(BinaryMap(np.zeros((4, 6), np.uint8)))
    assert z.shape == (2, 3) and not z.bits.any() and z.downsampled
    b = np.zeros((4, 4), np.uint8)
    b[3, 3] = 1
    assert downsample_by_2(BinaryMap(b)).bits.tolist() == [[0, 0], [0, 1]]
    assert downsample_by_2(BinaryMap(np.ones((4, 4), np.uint8))).bits.all()
    assert downsample_by_2(BinaryMap(np.ones((5, 3), np.uint8))).shape == (3, 2)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_downsample_block_or(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 15, size=2)
    b = (rng.random((h, w)) < 0.1).astype(np.uint8)
    d = downsample_by_2(BinaryMap(b)).bits
    for y in range(d.shape[0]):
        for x in range(d.shape[1]):
            assert d[y, x] == b[2 * y:2 * y + 2, 2 * x:2 * x + 2].max()
