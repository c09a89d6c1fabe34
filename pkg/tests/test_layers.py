import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reswcae import autodiff as ad
from reswcae import layers
from reswcae.autodiff import ContractError, DimensionError, Tensor
from reswcae.layers import ConvLayer, bilinear_resize, concat_channels, conv2d, conv2d_transpose

from conftest import check_gradients


def correlate_oracle(x, w, stride):
    """Nested-loop "same"-padded cross-correlation for (C, H, W) input."""
    c, h, wd = x.shape
    oh, pt, pb = -(-h // stride), None, None
    ow = -(-wd // stride)
    pad_h = max((oh - 1) * stride + 3 - h, 0)
    pad_w = max((ow - 1) * stride + 3 - wd, 0)
    xp = np.zeros((c, h + pad_h, wd + pad_w))
    xp[:, pad_h // 2:pad_h // 2 + h, pad_w // 2:pad_w // 2 + wd] = x
    out = np.zeros((w.shape[0], oh, ow))
    for o in range(w.shape[0]):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(c):
                    for di in range(3):
                        for dj in range(3):
                            acc += w[o, ci, di, dj] * xp[ci, i * stride + di, j * stride + dj]
                out[o, i, j] = acc
    return out


def test_conv_shape_103x96():
    layer = ConvLayer(1, 32, stride=2)
    out = layer(Tensor(np.zeros((1, 1, 103, 96), dtype=np.float32)))
    assert out.shape == (1, 32, 52, 48)


def test_identity_kernel(rng):
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    x = rng.random((1, 1, 7, 6))
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(w), stride=1).data, x)


@pytest.mark.parametrize("shape, stride", [((1, 5, 5), 1), ((2, 7, 6), 2), ((3, 6, 9), 2), ((2, 4, 5), 1)])
def test_conv_matches_loop_oracle(shape, stride, rng):
    x = rng.normal(size=shape)
    w = rng.normal(size=(3, shape[0], 3, 3))
    got = conv2d(Tensor(x[None]), Tensor(w), stride=stride).data[0]
    np.testing.assert_allclose(got, correlate_oracle(x, w, stride), atol=1e-10)


def test_conv_channel_mismatch():
    with pytest.raises(ContractError):
        ConvLayer(3, 4)(Tensor(np.zeros((1, 2, 5, 5))))


def test_transpose_shape_targets():
    layer = ConvLayer(128, 64, stride=2, mode="transpose")
    out = layer(Tensor(np.zeros((1, 128, 7, 6), dtype=np.float32)), target=(13, 12))
    assert out.shape == (1, 64, 13, 12)


def test_transpose_identity_stride1(rng):
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    x = rng.random((1, 1, 6, 5))
    np.testing.assert_array_equal(conv2d_transpose(Tensor(x), Tensor(w), stride=1, target_h=6, target_w=5).data, x)


def test_transpose_unreachable_target():
    with pytest.raises(DimensionError):
        conv2d_transpose(Tensor(np.zeros((1, 1, 7, 6))), Tensor(np.zeros((1, 1, 3, 3))), stride=2, target_h=20, target_w=12)


@pytest.mark.parametrize("target", [(12, 10), (16, 14), (13, 11)])
def test_transpose_reachable_extremes(target):
    out = conv2d_transpose(Tensor(np.ones((1, 1, 7, 6))), Tensor(np.ones((1, 1, 3, 3))), stride=2, target_h=target[0], target_w=target[1])
    assert out.shape[2:] == target


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 2]), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_transpose_is_adjoint_of_conv(h, w, stride, ci, co, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, ci, h, w))
    k = rng.normal(size=(co, ci, 3, 3))
    y_shape = conv2d(Tensor(x), Tensor(k), stride=stride).shape
    y = rng.normal(size=y_shape)
    lhs = np.sum(conv2d(Tensor(x), Tensor(k), stride=stride).data * y)
    rhs = np.sum(x * conv2d_transpose(Tensor(y), Tensor(k), stride=stride, target_h=h, target_w=w).data)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_chunked_conv_matches_single_chunk(rng, monkeypatch):
    x = rng.normal(size=(5, 2, 9, 8))
    k = rng.normal(size=(3, 2, 3, 3))
    g = rng.normal(size=(5, 3, 5, 4))
    xt, kt = Tensor(x, requires_grad=True), Tensor(k, requires_grad=True)
    ad.sum(conv2d(xt, kt, stride=2) * g).backward()
    monkeypatch.setattr(layers, "COL_BUDGET", 100)
    xc, kc = Tensor(x, requires_grad=True), Tensor(k, requires_grad=True)
    out = conv2d(xc, kc, stride=2)
    ad.sum(out * g).backward()
    np.testing.assert_allclose(xc.grad, xt.grad, atol=1e-12)
    np.testing.assert_allclose(kc.grad, kt.grad, atol=1e-12)
    kt2 = rng.normal(size=(2, 3, 3, 3))
    a = conv2d_transpose(Tensor(x), Tensor(kt2), stride=2, target_h=18, target_w=16).data
    monkeypatch.setattr(layers, "COL_BUDGET", 1 << 23)
    np.testing.assert_allclose(a, conv2d_transpose(Tensor(x), Tensor(kt2), stride=2, target_h=18, target_w=16).data, atol=1e-12)


@pytest.mark.parametrize("stride, size", [(1, (5, 4)), (2, (5, 6)), (2, (7, 7))])
def test_conv_gradients(stride, size, rng):
    x = rng.normal(size=(2, 2) + size)
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    err = check_gradients(lambda x, w, b: ad.sum(ad.square(conv2d(x, w, b, stride))), [x, w, b])
    assert err < 1e-4


@pytest.mark.parametrize("size, target", [((3, 3), (5, 6)), ((4, 3), (8, 6)), ((2, 2), (5, 3))])
def test_transpose_gradients(size, target, rng):
    x = rng.normal(size=(2, 3) + size)
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=2)
    err = check_gradients(lambda x, w, b: ad.sum(ad.square(conv2d_transpose(x, w, b, 2, *target))), [x, w, b])
    assert err < 1e-4


def test_bilinear_constant_and_identity(rng):
    c = np.full((1, 2, 5, 4), 0.7)
    np.testing.assert_allclose(bilinear_resize(Tensor(c), 11, 9).data, 0.7, atol=1e-15)
    x = rng.random((1, 2, 5, 4))
    np.testing.assert_array_equal(bilinear_resize(Tensor(x), 5, 4).data, x)


def test_bilinear_hand_value():
    x = np.array([[0.0, 1.0], [2.0, 3.0]])[None, None]
    out = bilinear_resize(Tensor(x), 3, 3).data[0, 0]
    # align corners: the centre sits halfway between all four source pixels
    assert out[1, 1] == pytest.approx((0 + 1 + 2 + 3) / 4, abs=1e-15)
    assert (out[0, 0], out[0, 2], out[2, 0], out[2, 2]) == (0.0, 1.0, 2.0, 3.0)
    np.testing.assert_allclose(out[0], [0.0, 0.5, 1.0])


def test_bilinear_gradient(rng):
    x = rng.normal(size=(1, 2, 4, 3))
    g = rng.normal(size=(1, 2, 7, 5))
    assert check_gradients(lambda x: ad.sum(bilinear_resize(x, 7, 5) * g), [x]) < 1e-4
    assert check_gradients(lambda x: ad.sum(ad.square(bilinear_resize(x, 2, 2))), [x]) < 1e-4


def test_concat_shapes_and_errors():
    a = Tensor(np.zeros((1, 256, 7, 6)))
    b = Tensor(np.zeros((1, 64, 7, 6)))
    assert concat_channels(a, b).shape == (1, 320, 7, 6)
    x = Tensor(np.arange(12.0).reshape(1, 1, 3, 4))
    np.testing.assert_array_equal(concat_channels(x, Tensor(np.zeros((1, 0, 3, 4)))).data, x.data)
    with pytest.raises(DimensionError, match=r"\(1, 256, 7, 6\).*\(1, 64, 6, 6\)"):
        concat_channels(a, Tensor(np.zeros((1, 64, 6, 6))))


def test_concat_routes_gradients(rng):
    a = rng.normal(size=(1, 2, 3, 3))
    b = rng.normal(size=(1, 3, 3, 3))
    g = rng.normal(size=(1, 5, 3, 3))
    assert check_gradients(lambda a, b: ad.sum(concat_channels(a, b) * g), [a, b]) < 1e-4
    at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.sum(concat_channels(at, bt) * g).backward()
    np.testing.assert_array_equal(at.grad, g[:, :2])
    np.testing.assert_array_equal(bt.grad, g[:, 2:])


def _encoder_sizes():
    h, w = 103, 96
    sizes = [(h, w)]
    for _ in range(4):
        h, w = -(-h // 2), -(-w // 2)
        sizes.append((h, w))
    return sizes


@pytest.mark.parametrize("size", _encoder_sizes())
def test_shapes_are_pure_functions_of_config(size):
    h, w = size
    down = ConvLayer(2, 3, stride=2)
    x = Tensor(np.zeros((1, 2, h, w)))
    out = down(x)
    assert out.shape[2:] == down.output_size(h, w) == (-(-h // 2), -(-w // 2))
    up = ConvLayer(3, 2, stride=2, mode="transpose")
    assert up(out, target=(h, w)).shape[2:] == (h, w)
    same = ConvLayer(2, 2, stride=1)
    assert same(x).shape == x.shape


def test_layer_forward_finite(rng):
    layer = ConvLayer(2, 4, stride=2, rng=rng, dtype=np.float64)
    out = layer(Tensor(rng.normal(size=(2, 2, 13, 12)) * 100))
    assert np.all(np.isfinite(out.data))


def test_glorot_bounds():
    layer = ConvLayer(16, 32, rng=np.random.default_rng(0), dtype=np.float64)
    limit = np.sqrt(6.0 / (16 * 9 + 32 * 9))
    assert np.max(np.abs(layer.weight.data)) <= limit
    assert np.all(layer.bias.data == 0)
