import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from specxnet import functional as F
from specxnet.gradcheck import gradcheck, projection_loss
from specxnet.tensor import Tensor


def naive_conv(x, w, b, stride, pad):
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    for ni in range(n):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    for c in range(c_in):
                        for u in range(k):
                            for v in range(k):
                                out[ni, o, i, j] += xp[ni, c, i * stride + u, j * stride + v] * w[o, c, u, v]
            if b is not None:
                out[ni, o] += b[o]
    return out


def check(fn, *tensors, tol=1e-6):
    params = {f"t{i}": t for i, t in enumerate(tensors)}
    for t in tensors:
        t.requires_grad = True
    rep = gradcheck(fn, params, step=1e-5)
    assert rep.max_rel_error < tol, rep


# -- conv ----------------------------------------------------------------------------------

def test_conv_ones_counts_overlap():
    out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), padding=1).data[0, 0]
    assert out[1, 1] == 9.0 and out[0, 0] == 4.0


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 5, 5))
    out = F.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    assert np.array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0), (2, 0)])
def test_conv_matches_naive_loops(rng, stride, pad):
    x = rng.standard_normal((2, 4, 8, 8))
    w = rng.standard_normal((6, 4, 3, 3))
    b = rng.standard_normal(6)
    out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, pad), atol=1e-12)


def test_grouped_conv_matches_per_group_naive(rng):
    x = rng.standard_normal((1, 4, 6, 6))
    w = rng.standard_normal((4, 2, 3, 3))
    out = F.conv2d(Tensor(x), Tensor(w), padding=1, groups=2).data
    ref = np.concatenate([naive_conv(x[:, :2], w[:2], None, 1, 1), naive_conv(x[:, 2:], w[2:], None, 1, 1)], 1)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ValueError, match=r"\(1, 3, 4, 4\)"):
        F.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 2, 3, 3))))
    with pytest.raises(ValueError, match="empty"):
        F.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


def test_conv_is_linear_in_input(rng):
    x, y = rng.standard_normal((2, 2, 2, 6, 6))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    lhs = F.conv2d(Tensor(1.5 * x - 0.7 * y), w, padding=1).data
    rhs = 1.5 * F.conv2d(Tensor(x), w, padding=1).data - 0.7 * F.conv2d(Tensor(y), w, padding=1).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@pytest.mark.parametrize("groups,stride", [(1, 1), (1, 2), (3, 1), (3, 2)])
def test_conv_gradcheck(rng, groups, stride):
    x = Tensor(rng.standard_normal((2, 3, 6, 6)))
    w = Tensor(rng.standard_normal((3, 3 // groups, 3, 3)))
    b = Tensor(rng.standard_normal(3))
    check(lambda: projection_loss(F.conv2d(x, w, b, stride, 1, groups)), x, w, b)


# -- batch norm ----------------------------------------------------------------------------

def bn_call(x, gamma=1.0, beta=0.0, training=True, eps=1e-5):
    c = x.shape[1]
    rm, rv = np.zeros(c), np.ones(c)
    out = F.batch_norm(Tensor(x), Tensor(np.full(c, gamma)), Tensor(np.full(c, beta)), rm, rv, training, eps)
    return out.data, rm, rv


def test_bn_training_normalizes(rng):
    x = 3 + 2 * rng.standard_normal((4, 3, 5, 5))
    out, _, _ = bn_call(x)
    var = x.var(axis=(0, 2, 3))
    assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-10
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), var / (var + 1e-5), atol=1e-6)


def test_bn_affine(rng):
    x = rng.standard_normal((8, 2, 6, 6))
    out, _, _ = bn_call(x, gamma=2.0, beta=3.0)
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 3.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=(0, 2, 3)), 2.0, atol=1e-4)


def test_bn_matches_two_pass_statistics(rng):
    x = rng.standard_normal((3, 2, 4, 4))
    out, rm, rv = bn_call(x, gamma=1.3, beta=-0.2)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    for c in range(2):
        vals = x[:, c].ravel()
        mu = sum(vals) / m
        var = sum((v - mu) ** 2 for v in vals) / m
        ref = 1.3 * (x[:, c] - mu) / np.sqrt(var + 1e-5) - 0.2
        np.testing.assert_allclose(out[:, c], ref, atol=1e-12)
        assert rm[c] == pytest.approx(0.1 * mu, abs=1e-15)
        assert rv[c] == pytest.approx(0.9 + 0.1 * var * m / (m - 1), abs=1e-15)


def test_bn_eval_uses_running_stats(rng):
    x = rng.standard_normal((2, 1, 3, 3))
    out = F.batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), np.array([0.5]), np.array([4.0]),
                       training=False)
    np.testing.assert_allclose(out.data, (x - 0.5) / np.sqrt(4.0 + 1e-5), atol=1e-15)


def test_bn_single_value_and_bad_eps():
    out, _, _ = bn_call(np.full((1, 1, 1, 1), 7.0))
    assert np.isfinite(out).all()
    with pytest.raises(ValueError, match="eps"):
        bn_call(np.ones((2, 1, 2, 2)), eps=0.0)


def test_bn_gradcheck(rng):
    x = Tensor(rng.standard_normal((2, 3, 4, 4)))
    g = Tensor(rng.standard_normal(3))
    b = Tensor(rng.standard_normal(3))
    check(lambda: projection_loss(F.batch_norm(x, g, b, np.zeros(3), np.ones(3), True)), x, g, b)


# -- activations ---------------------------------------------------------------------------

def test_sigmoid_softmax_basics():
    assert F.sigmoid(Tensor(np.zeros(1))).data[0] == 0.5
    np.testing.assert_array_equal(F.softmax(Tensor(np.array([[3.7, 3.7]])), axis=1).data, [[0.5, 0.5]])
    big = F.sigmoid(Tensor(np.array([-800.0, 800.0]))).data
    assert 0.0 < big[0] < 1e-300 and big[1] == np.nextafter(1.0, 0.0)
    assert np.all((F.sigmoid(Tensor(np.linspace(-60, 60, 241))).data > 0) & (F.sigmoid(Tensor(np.linspace(-60, 60, 241))).data < 1))


@given(hnp.arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(arr, c):
    p = F.softmax(Tensor(arr), axis=1).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(F.softmax(Tensor(arr + c), axis=1).data, p, atol=1e-10)


def test_relu_gradient_away_from_kink(rng):
    x = rng.uniform(0.1, 1.0, 20) * rng.choice([-1, 1], 20)
    t = Tensor(x, requires_grad=True)
    F.relu(t).sum().backward()
    np.testing.assert_array_equal(t.grad, (x > 0).astype(float))
    check(lambda: projection_loss(F.relu(t)), t)


def test_sigmoid_softmax_logsoftmax_gradcheck(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    check(lambda: projection_loss(F.sigmoid(x)), x)
    check(lambda: projection_loss(F.softmax(x, axis=1)), x)
    check(lambda: projection_loss(F.log_softmax(x, axis=1)), x)


# -- pooling, resizing, cropping -----------------------------------------------------------

def naive_max_pool(x, k, s):
    n, c, h, w = x.shape
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    out = np.empty((n, c, ho, wo))
    for idx in np.ndindex(n, c, ho, wo):
        a, b, i, j = idx
        out[idx] = x[a, b, i * s:i * s + k, j * s:j * s + k].max()
    return out


def test_max_pool_basic():
    assert F.max_pool2d(Tensor(np.array([[[[1.0, 2], [3, 4]]]])), 2).data.item() == 4.0
    np.testing.assert_array_equal(F.max_pool2d(Tensor(np.full((1, 2, 4, 4), 2.5)), 2).data, 2.5)
    with pytest.raises(ValueError, match="larger"):
        F.max_pool2d(Tensor(np.zeros((1, 1, 2, 2))), 3)


@pytest.mark.parametrize("k,s", [(2, 2), (3, 2), (2, 1)])
def test_max_pool_matches_loops(rng, k, s):
    x = rng.standard_normal((2, 3, 7, 7))
    np.testing.assert_array_equal(F.max_pool2d(Tensor(x), k, s).data, naive_max_pool(x, k, s))


def test_max_pool_tie_routes_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    F.max_pool2d(x, 2).sum().backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


def test_max_pool_gradcheck(rng):
    x = Tensor(rng.permutation(64).reshape(1, 1, 8, 8) * 0.1)
    check(lambda: projection_loss(F.max_pool2d(x, 2)), x)


def test_adaptive_pool_quadrants_and_identity(rng):
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = F.adaptive_avg_pool2d(Tensor(x), 2, 2).data[0, 0]
    for i in range(2):
        for j in range(2):
            assert out[i, j] == pytest.approx(x[0, 0, 2 * i:2 * i + 2, 2 * j:2 * j + 2].mean(), abs=1e-12)
    y = rng.standard_normal((2, 3, 5, 7))
    np.testing.assert_allclose(F.adaptive_avg_pool2d(Tensor(y), 5, 7).data, y, atol=1e-15)
    np.testing.assert_allclose(F.adaptive_avg_pool2d(Tensor(y), 1, 1).data[..., 0, 0], y.mean(axis=(2, 3)),
                               atol=1e-12)


def test_adaptive_pool_uneven_regions(rng):
    x = rng.standard_normal((1, 1, 5, 5))
    out = F.adaptive_avg_pool2d(Tensor(x), 3, 2).data[0, 0]
    for i in range(3):
        r0, r1 = (i * 5) // 3, -(-(i + 1) * 5 // 3)
        for j in range(2):
            c0, c1 = (j * 5) // 2, -(-(j + 1) * 5 // 2)
            assert out[i, j] == pytest.approx(x[0, 0, r0:r1, c0:c1].mean(), abs=1e-12)


def half_pixel(img, oh, ow):
    h, w = img.shape
    out = np.empty((oh, ow))
    for i in range(oh):
        for j in range(ow):
            y = min(max((i + 0.5) * h / oh - 0.5, 0), h - 1)
            x = min(max((j + 0.5) * w / ow - 0.5, 0), w - 1)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = ((1 - dy) * (1 - dx) * img[y0, x0] + (1 - dy) * dx * img[y0, x1]
                         + dy * (1 - dx) * img[y1, x0] + dy * dx * img[y1, x1])
    return out


def test_bilinear_hand_case():
    out = F.bilinear_resize(Tensor(np.array([[[[0.0, 1.0], [1.0, 2.0]]]])), 4, 4).data[0, 0]
    expected = np.array([[0, .25, .75, 1], [.25, .5, 1, 1.25], [.75, 1, 1.5, 1.75], [1, 1.25, 1.75, 2]])
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("shape,out", [((3, 5), (7, 4)), ((6, 6), (3, 2)), ((4, 4), (4, 4))])
def test_bilinear_matches_pointwise_oracle(rng, shape, out):
    x = rng.standard_normal(shape)
    np.testing.assert_allclose(F.bilinear_resize(Tensor(x[None, None]), *out).data[0, 0],
                               half_pixel(x, *out), atol=1e-12)


def test_bilinear_constant():
    np.testing.assert_allclose(F.bilinear_resize(Tensor(np.full((1, 2, 3, 5), 0.3)), 8, 2).data, 0.3,
                               atol=1e-15)


def test_pool_resize_gradcheck(rng):
    x = Tensor(rng.standard_normal((2, 2, 5, 6)))
    check(lambda: projection_loss(F.adaptive_avg_pool2d(x, 2, 3)), x)
    check(lambda: projection_loss(F.bilinear_resize(x, 7, 4)), x)


def test_center_crop_offsets():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(F.center_crop(Tensor(x), 2, 2).data[0, 0], x[0, 0, 1:3, 1:3])
    y = np.arange(25.0).reshape(1, 1, 5, 5)
    out = F.center_crop(Tensor(y), 2, 2).data[0, 0]
    expected = [[y[0, 0, r, c] for c in (1, 2)] for r in (1, 2)]
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(F.center_crop(Tensor(y), 5, 5).data, y)
    with pytest.raises(ValueError, match="exceeds"):
        F.center_crop(Tensor(y), 6, 2)


def test_linear_cases(rng):
    x = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(F.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x)
    b = rng.standard_normal(2)
    np.testing.assert_array_equal(F.linear(Tensor(x), Tensor(np.zeros((2, 3))), Tensor(b)).data,
                                  np.broadcast_to(b, (4, 2)))
    w = rng.standard_normal((2, 3))
    ref = np.array([[sum(x[i, k] * w[j, k] for k in range(3)) + b[j] for j in range(2)] for i in range(4)])
    np.testing.assert_allclose(F.linear(Tensor(x), Tensor(w), Tensor(b)).data, ref, atol=1e-12)
    with pytest.raises(ValueError, match="mismatch"):
        F.linear(Tensor(x), Tensor(np.zeros((2, 4))))


def test_linear_gradcheck_is_tight(rng):
    x, w, b = Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((2, 4))), Tensor(rng.standard_normal(2))
    check(lambda: projection_loss(F.linear(x, w, b)), x, w, b, tol=1e-7)


def test_spectral_ops_gradcheck(rng):
    x = Tensor(rng.standard_normal((1, 2, 4, 6)))
    check(lambda: projection_loss(F.fft2_stacked(x)), x)
    y = Tensor(rng.standard_normal((1, 4, 5, 3)))
    check(lambda: projection_loss(F.ifft2_stacked(y)), y)
    check(lambda: projection_loss(F.fftshift2d(F.crop(y, 1, 0, 3, 2))), y)
