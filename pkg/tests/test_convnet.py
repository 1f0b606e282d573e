import numpy as np
import pytest

from artgenre.convnet import (
    Conv,
    FeatureNetwork,
    Pool,
    Relu,
    backward_to_input,
    builtin_network,
    forward,
    load_network,
    network_from_bytes,
    network_to_bytes,
    save_network,
)


def naive_conv(x, w, b):
    # explicit-loop reference: stride 1, same zero padding
    o, c, kh, kw = w.shape
    _, h, wd = x.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((o, h, wd))
    for m in range(o):
        for i in range(h):
            for j in range(wd):
                acc = b[m]
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            ii, jj = i + u - ph, j + v - pw
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[m, ch, u, v] * x[ch, ii, jj]
                out[m, i, j] = acc
    return out


def test_zero_image_zero_bias_gives_zero_activations():
    rng = np.random.default_rng(0)
    net = FeatureNetwork(
        [
            Conv(rng.standard_normal((4, 1, 3, 3)), np.zeros(4)),
            Relu(),
            Pool("max"),
            Conv(rng.standard_normal((6, 4, 3, 3)), np.zeros(6)),
        ]
    )
    outputs, _ = forward(net, np.zeros((1, 8, 8)))
    for act in outputs:
        np.testing.assert_array_equal(act, 0.0)


def test_identity_1x1_conv():
    net = FeatureNetwork([Conv(np.ones((1, 1, 1, 1)), np.zeros(1))])
    x = np.random.default_rng(1).random((1, 5, 7))
    outputs, _ = forward(net, x)
    np.testing.assert_array_equal(outputs[0], x)


def test_forward_matches_naive_conv():
    rng = np.random.default_rng(2)
    w1 = rng.standard_normal((3, 2, 3, 3))
    b1 = rng.standard_normal(3)
    w2 = rng.standard_normal((4, 3, 3, 3))
    b2 = rng.standard_normal(4)
    net = FeatureNetwork([Conv(w1, b1), Relu(), Conv(w2, b2)])
    x = rng.random((2, 6, 5))
    outputs, _ = forward(net, x)
    ref1 = naive_conv(x, w1, b1)
    np.testing.assert_allclose(outputs[0], ref1, atol=1e-12)
    np.testing.assert_allclose(outputs[2], naive_conv(np.maximum(ref1, 0), w2, b2), atol=1e-12)


def test_hand_traced_two_layer_net():
    # 1 input map, single 3x3 kernel summing the 4-neighborhood, on a 4x4 ramp
    w = np.zeros((1, 1, 3, 3))
    w[0, 0] = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    net = FeatureNetwork([Conv(w, np.zeros(1)), Pool("max")])
    x = np.arange(16, dtype=float).reshape(1, 4, 4)
    outputs, _ = forward(net, x)
    y = outputs[0][0]
    # interior pixel (1,1): up 1 + left 4 + right 6 + down 9 = 20
    assert y[1, 1] == 1 + 4 + 6 + 9
    # corner (0,0): right 1 + down 4 (other taps fall in zero padding)
    assert y[0, 0] == 1 + 4
    # max pool halves each axis
    assert outputs[1].shape == (1, 2, 2)
    assert outputs[1][0, 0, 0] == y[:2, :2].max()


def test_pool_average_and_odd_dims():
    x = np.arange(9, dtype=float).reshape(1, 3, 3)
    net_avg = FeatureNetwork([Conv(np.ones((1, 1, 1, 1)), np.zeros(1)), Pool("avg")])
    outputs, _ = forward(net_avg, x)
    pooled = outputs[1][0]
    assert pooled.shape == (2, 2)
    assert pooled[0, 0] == pytest.approx((0 + 1 + 3 + 4) / 4)
    assert pooled[0, 1] == pytest.approx((2 + 5) / 2)  # clipped window
    assert pooled[1, 1] == pytest.approx(8.0)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    net = builtin_network(in_channels=1, seed=5)
    x = rng.random((1, 10, 10))
    target = rng.standard_normal((16, 3, 3))

    def loss_of(arr):
        outputs, _ = forward(net, arr)
        return 0.5 * float(np.sum((outputs[-1] - target) ** 2))

    outputs, caches = forward(net, x)
    grad_out = outputs[-1] - target
    grad = backward_to_input(net, caches, {len(net.layers) - 1: grad_out})

    h = 1e-6
    for c, i, j in [(0, 0, 0), (0, 3, 7), (0, 9, 9), (0, 5, 2)]:
        xp = x.copy()
        xp[c, i, j] += h
        xm = x.copy()
        xm[c, i, j] -= h
        fd = (loss_of(xp) - loss_of(xm)) / (2 * h)
        assert grad[c, i, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_avg_pool_backward_matches_finite_differences_odd_dims():
    rng = np.random.default_rng(6)
    net = FeatureNetwork(
        [
            Conv(rng.standard_normal((3, 1, 3, 3)) * 0.5, rng.standard_normal(3) * 0.1),
            Relu(),
            Pool("avg"),
            Conv(rng.standard_normal((2, 3, 3, 3)) * 0.5, rng.standard_normal(2) * 0.1),
            Pool("avg"),
        ]
    )
    x = rng.random((1, 9, 7))  # odd dims force clipped pooling windows
    target = rng.standard_normal((2, 3, 2))

    def loss_of(arr):
        outputs, _ = forward(net, arr)
        return 0.5 * float(np.sum((outputs[-1] - target) ** 2))

    outputs, caches = forward(net, x)
    grad = backward_to_input(net, caches, {len(net.layers) - 1: outputs[-1] - target})

    h = 1e-6
    rng2 = np.random.default_rng(7)
    for _ in range(10):
        c, i, j = 0, int(rng2.integers(9)), int(rng2.integers(7))
        xp = x.copy()
        xp[c, i, j] += h
        xm = x.copy()
        xm[c, i, j] -= h
        fd = (loss_of(xp) - loss_of(xm)) / (2 * h)
        assert grad[c, i, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_relu_zero_preactivation_has_zero_subgradient():
    net = FeatureNetwork([Conv(np.ones((1, 1, 1, 1)), np.zeros(1)), Relu()])
    x = np.array([[[0.0, 1.0], [-1.0, 0.0]]])
    _, caches = forward(net, x)
    g = backward_to_input(net, caches, {1: np.ones((1, 2, 2))})
    np.testing.assert_array_equal(g[0], [[0.0, 1.0], [0.0, 0.0]])


def test_network_validation():
    with pytest.raises(ValueError):
        FeatureNetwork([Relu()])  # no convolution
    with pytest.raises(ValueError):
        FeatureNetwork([Conv(np.ones((1, 1, 2, 2)), np.zeros(1))])  # even kernel
    with pytest.raises(ValueError):
        FeatureNetwork(
            [
                Conv(np.ones((2, 1, 3, 3)), np.zeros(2)),
                Conv(np.ones((3, 4, 3, 3)), np.zeros(3)),  # expects 4, gets 2
            ]
        )


def test_forward_rejects_wrong_input():
    net = builtin_network(in_channels=3, seed=0)
    with pytest.raises(ValueError):
        forward(net, np.zeros((1, 8, 8)))
    sized = FeatureNetwork(net.layers, input_size=(16, 16))
    with pytest.raises(ValueError):
        forward(sized, np.zeros((3, 8, 8)))


def test_network_file_roundtrip(tmp_path):
    net = builtin_network(in_channels=3, seed=9)
    path = tmp_path / "net.bin"
    save_network(net, path)
    back = load_network(path)
    assert len(back.layers) == len(net.layers)
    for a, b in zip(back.layers, net.layers):
        assert type(a) is type(b)
        if isinstance(a, Conv):
            np.testing.assert_array_equal(a.weight, b.weight)
            np.testing.assert_array_equal(a.bias, b.bias)
        if isinstance(a, Pool):
            assert a.mode == b.mode
    # determinism of the encoding itself
    assert network_to_bytes(net) == network_to_bytes(back)


def test_network_from_bytes_rejects_garbage():
    with pytest.raises(ValueError):
        network_from_bytes(b"NOPE" + b"\0" * 64)


def test_builtin_network_structure():
    net = builtin_network(in_channels=3, seed=7)
    kinds = [type(layer).__name__ for layer in net.layers]
    assert kinds == ["Conv", "Relu", "Pool", "Conv", "Relu", "Pool"]
    assert net.layers[0].weight.shape[0] == 8
    assert net.layers[3].weight.shape[:2] == (16, 8)
    assert net.conv_layer_ids() == [0, 3]
