import numpy as np
import pytest
from scipy.signal import correlate2d

from edar import nn
from edar.nn import functional as F
from edar.nn.weights import WeightFormatError, read_store
from edar.roinet import build_roinet
from edar.segnet import build_segnet

from gradcheck import LAYER_KINDS, check_layer, numeric_grad, rel_error


# -- forward examples ------------------------------------------------------------

def test_conv_identity_1x1():
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 4))
    y = F.conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    assert np.array_equal(y, x)


def test_conv_ones_on_one_hot():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    y = F.conv2d(x, np.ones((1, 1, 3, 3)), np.zeros(1))
    expect = np.zeros((5, 5))
    expect[1:4, 1:4] = 1
    assert np.array_equal(y[0, 0], expect)
    # corner pixel: zero padding clips the block
    x = np.zeros((1, 1, 4, 4))
    x[0, 0, 0, 0] = 1.0
    y = F.conv2d(x, np.ones((1, 1, 3, 3)), np.zeros(1))
    assert y[0, 0].sum() == 4 and y[0, 0, :2, :2].min() == 1


@pytest.mark.parametrize("seed", range(5))
def test_conv3x3_matches_direct_correlation(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    y = F.conv2d(x, w, b)
    for n in range(2):
        for o in range(4):
            ref = sum(correlate2d(x[n, c], w[o, c], mode="same") for c in range(3)) + b[o]
            np.testing.assert_allclose(y[n, o], ref, atol=1e-12)


def test_conv_shape_errors():
    x = np.zeros((1, 2, 4, 4))
    with pytest.raises(ValueError):
        F.conv2d(x, np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ValueError):
        F.conv2d(x, np.zeros((1, 2, 5, 5)), np.zeros(1))
    with pytest.raises(ValueError):
        F.conv2d(x, np.zeros((1, 2, 3, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        F.conv2d(x[0], np.zeros((1, 2, 3, 3)), np.zeros(1))


def test_conv_flops_formula():
    g = nn.LayerGraph("t")
    x = g.input("x", 3)
    g.conv(x, 5, 3, "c")
    assert nn.flops(g, {"x": (3, 7, 9)}) == 2 * 9 * 3 * 5 * 7 * 9


def test_dwconv_center_identity():
    x = np.random.default_rng(1).normal(size=(1, 3, 4, 6))
    w = np.zeros((3, 3, 3))
    w[:, 1, 1] = 1
    assert np.array_equal(F.dwconv2d(x, w, np.zeros(3)), x)


def test_dwconv_channels_independent():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 2, 6, 6))
    w = rng.normal(size=(2, 3, 3))
    y = F.dwconv2d(x, w, np.zeros(2))
    x0 = x.copy()
    x0[:, 1] = 0
    y0 = F.dwconv2d(x0, w, np.zeros(2))
    assert np.array_equal(y0[:, 0], y[:, 0])
    assert np.all(y0[:, 1] == 0)
    for c in range(2):
        np.testing.assert_allclose(y[0, c], correlate2d(x[0, c], w[c], mode="same"), atol=1e-12)


def test_dwconv_flops_and_errors():
    g = nn.LayerGraph("t")
    g.dwconv(g.input("x", 4), "d")
    assert nn.flops(g, {"x": (4, 5, 3)}) == 2 * 9 * 4 * 5 * 3
    with pytest.raises(ValueError):
        F.dwconv2d(np.zeros((1, 2, 3, 3)), np.zeros((3, 3, 3)), np.zeros(2))


def test_maxpool_examples():
    assert np.array_equal(F.maxpool2(np.full((1, 1, 4, 6), 7.0)), np.full((1, 1, 2, 3), 7.0))
    assert F.maxpool2(np.array([[[[1.0, 2], [3, 4]]]])).tolist() == [[[[4.0]]]]
    x = np.random.default_rng(3).normal(size=(1, 2, 5, 5))
    y = F.maxpool2(x)
    assert y.shape == (1, 2, 3, 3)
    for c in range(2):
        for i in range(3):
            for j in range(3):
                assert y[0, c, i, j] == x[0, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()


def test_upsample_examples():
    assert np.array_equal(F.upsample2(np.full((1, 1, 2, 3), 2.0)), np.full((1, 1, 4, 6), 2.0))
    y = F.upsample2(np.array([[[[1.0, 2.0]]]]))
    assert y[0, 0].tolist() == [[1, 1, 2, 2], [1, 1, 2, 2]]


def test_fully_connected_examples():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 5))
    assert np.array_equal(F.fully_connected(x, np.eye(5), np.zeros(5)), x)
    b = rng.normal(size=2)
    assert np.array_equal(F.fully_connected(x, np.zeros((2, 5)), b), np.tile(b, (3, 1)))
    w = rng.normal(size=(4, 5))
    y = F.fully_connected(x, w, b[:1].repeat(4))
    for n in range(3):
        for o in range(4):
            acc = b[0]
            for i in range(5):
                acc += w[o, i] * x[n, i]
            assert abs(y[n, o] - acc) < 1e-12
    with pytest.raises(ValueError):
        F.fully_connected(x, np.zeros((2, 4)), np.zeros(2))


def test_activation_examples():
    assert F.relu(np.array(-1.0)) == 0
    assert F.leaky_relu(np.array([-2.0, 3.0])).tolist() == [-0.02, 3.0]
    assert F.sigmoid(np.array([0.0]))[0] == 0.5
    s = F.sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(s)) and s[0] == 0 and s[1] == 1
    p = F.softmax_channels(np.full((1, 4, 2, 2), 3.0))
    assert np.allclose(p, 0.25)


def test_softmax_normalized():
    x = np.random.default_rng(5).normal(size=(3, 4, 7, 5)) * 50
    p = F.softmax_channels(x)
    assert p.min() >= 0
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-6


def test_concat_add_shape_errors():
    with pytest.raises(ValueError):
        F.concat_channels(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 3, 4)))
    with pytest.raises(ValueError):
        F.add_skip(np.zeros((1, 2, 3, 3)), np.zeros((1, 3, 3, 3)))


# -- gradients ------------------------------------------------------------------

@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_layer_gradients(kind):
    errors = [check_layer(kind, seed) for seed in range(20)]
    assert max(errors) < 1e-4, errors


def test_fc_mse_closed_form():
    rng = np.random.default_rng(6)
    n, fi, fo = 7, 5, 3
    x, y = rng.normal(size=(n, fi)), rng.normal(size=(n, fo))
    g = nn.LayerGraph("fc")
    g.fc(g.input("x", fi, spatial=False), fo, "fc")
    g.initialize(1)
    W, b = g.params["fc.w"], g.params["fc.b"]
    b[...] = rng.normal(size=fo)
    out = g.forward(x)
    grads = g.backward(2 * (out - y) / n)
    np.testing.assert_allclose(grads["fc.w"], 2 * (x @ W.T + b - y).T @ x / n, atol=1e-12)
    np.testing.assert_allclose(grads["fc.b"], 2 * (x @ W.T + b - y).sum(0) / n, atol=1e-12)


def _graph_fd(g, feeds, seed):
    rng = np.random.default_rng(seed)
    out = g.forward(feeds)
    r = rng.normal(size=out.shape)
    grads = g.backward(r)
    input_grads = dict(g.input_grads)
    loss = lambda: float((g.forward(feeds) * r).sum())  # noqa: E731
    worst = 0.0
    for k, p in g.params.items():
        worst = max(worst, rel_error(grads[k], numeric_grad(loss, p)))
    for k, v in feeds.items():
        worst = max(worst, rel_error(input_grads[k], numeric_grad(loss, v)))
    return worst


def test_composite_segnet_gradient():
    g = build_segnet("S", widths=((3, 4, 5), (2, 3, 4)))
    g.initialize(0)
    for p in g.params.values():
        p += np.random.default_rng(1).normal(scale=0.05, size=p.shape)
    x = np.random.default_rng(2).uniform(size=(2, 1, 8, 8))
    assert _graph_fd(g, {"image": x}, 3) < 1e-4


def test_composite_roinet_gradient():
    g = build_roinet((2, 3, 2), 5, input_size=(6, 5))
    g.initialize(4)
    rng = np.random.default_rng(5)
    feeds = {"maps": rng.uniform(size=(2, 2, 6, 5)), "prev_roi": rng.uniform(size=(2, 4))}
    assert _graph_fd(g, feeds, 6) < 1e-4


def test_zero_loss_gradient_gives_zero_param_grads():
    g = build_segnet("S", widths=((3, 4), (2, 3))).initialize(0)
    out = g.forward(np.random.default_rng(0).uniform(size=(1, 1, 8, 8)))
    grads = g.backward(np.zeros_like(out))
    assert all(not v.any() for v in grads.values())


def test_backward_before_forward_fails():
    g = build_segnet("S", widths=((3,), (2,))).initialize(0)
    with pytest.raises(nn.GraphError):
        g.backward(np.zeros((1, 4, 4, 4)))


# -- graph structure, accounting, persistence --------------------------------------

def test_graph_rejects_bad_structure():
    g = nn.LayerGraph("t")
    x = g.input("x", 2)
    with pytest.raises(nn.GraphError):
        g.conv("nope", 2, 1, "c")
    g.conv(x, 2, 1, "c")
    with pytest.raises(nn.GraphError):
        g.conv(x, 2, 1, "c")
    with pytest.raises(nn.GraphError):
        g.add(x, g.conv(x, 3, 1, "d"), "sum")
    with pytest.raises(nn.GraphError):
        g.forward(np.zeros((1, 3, 4, 4)))


def _segnet_flops_by_hand(dws, pws, h, w):
    """Independent count from the block description (one MAC = 2 FLOPs)."""
    total = 0
    sizes = []
    cin = 1
    for i, (d, p) in enumerate(zip(dws, pws)):
        if i:
            h, w = -(-h // 2), -(-w // 2)
        hw = h * w
        total += 2 * hw * (cin * d + 9 * d + d * p + (cin * p if cin != p else 0))
        sizes.append((h, w))
        cin = p
    for level in range(len(dws) - 2, -1, -1):
        h, w = h * 2, w * 2
        c = cin + pws[level]
        hw = h * w
        d, p = dws[level], pws[level]
        total += 2 * hw * (c * d + 9 * d + d * p + (c * p if c != p else 0))
        cin = p
    return total + 2 * h * w * cin * 4


@pytest.mark.parametrize("variant", ["S", "L"])
def test_segnet_flops_internal_consistency(variant):
    g = build_segnet(variant)
    rows = g.layer_flops({"image": (1, 400, 640)})
    assert nn.flops(g, {"image": (1, 400, 640)}) == sum(f for _, _, f in rows)
    dws, pws = __import__("edar.segnet", fromlist=["WIDTHS"]).WIDTHS[variant]
    assert nn.flops(g, {"image": (1, 400, 640)}) == _segnet_flops_by_hand(dws, pws, 400, 640)


def test_initialization_deterministic():
    a = build_roinet().initialize(3)
    b = build_roinet().initialize(3)
    c = build_roinet().initialize(4)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)
    for k, v in a.params.items():
        if k.endswith(".b"):
            assert not v.any()


def test_save_load_round_trip(tmp_path):
    g = build_segnet("S").initialize(7)
    path = tmp_path / "seg.edarw"
    nn.save_weights(g, path)
    h = build_segnet("S")
    nn.load_weights(h, path)
    for k in g.params:
        assert np.array_equal(h.params[k], g.params[k].astype(np.float32))
    x = np.random.default_rng(0).uniform(size=(1, 1, 16, 32))
    nn.save_weights(h, tmp_path / "again.edarw")
    assert (tmp_path / "again.edarw").read_bytes() == path.read_bytes()
    h2 = build_segnet("S")
    nn.load_weights(h2, tmp_path / "again.edarw")
    assert np.array_equal(h.forward(x), h2.forward(x))


def test_weight_file_layout(tmp_path):
    g = nn.LayerGraph("tiny")
    g.fc(g.input("x", 2, spatial=False), 3, "fc")
    g.initialize(0)
    path = tmp_path / "w.bin"
    nn.save_weights(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"EDAR"
    assert int.from_bytes(raw[4:8], "little") == 1
    store = read_store(path)
    assert store["fc.w"].dtype == np.float32 and store["fc.w"].shape == (3, 2)
    with pytest.raises(WeightFormatError):
        path.write_bytes(b"XXXX" + raw[4:])
        read_store(path)


def test_load_rejects_wrong_network(tmp_path):
    nn.save_weights(build_roinet().initialize(0), tmp_path / "r.bin")
    with pytest.raises(Exception):
        nn.load_weights(build_segnet("S"), tmp_path / "r.bin")
