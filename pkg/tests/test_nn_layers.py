"""Layer-level math: hand examples, adjoints, and the finite-difference oracle."""

import numpy as np
import pytest

from hbt import NumericError, RngStream, ValidationError
from hbt.nn import (
    BatchNorm2d,
    Conv2d,
    Dense,
    InputBinarize,
    LayerSpec,
    NetworkSpec,
    QuantSpec,
    Scaling,
    build_network,
    col2im,
    convnet4_spec,
    dsconv3_spec,
    im2col,
    softmax_cross_entropy,
)
from hbt.nn.layers import DepthwiseConv2d, PointwiseConv2d


def numeric_gradient(loss_fn, param, indices, h_scale=1e-6):
    out = []
    flat = param.value.ravel()
    for fi in indices:
        orig = flat[fi]
        h = h_scale * max(1.0, abs(orig))
        flat[fi] = orig + h
        lp = loss_fn()
        flat[fi] = orig - h
        lm = loss_fn()
        flat[fi] = orig
        out.append((lp - lm) / (2 * h))
    return np.array(out)


def assert_grads_match(analytic, numeric, rtol=1e-4, atol=1e-9):
    # atol guards the central-difference roundoff floor (~1e-10 at loss scale 1)
    # for parameters whose true gradient is essentially zero.
    err = np.abs(analytic - numeric)
    bound = rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    assert np.all(err <= bound), f"worst gap {err.max():.3e} vs bound {bound[err.argmax()]:.3e}"


class TestIm2col:
    def test_shapes_and_values(self):
        x = np.arange(2 * 3 * 4 * 4, dtype=np.float64).reshape(2, 3, 4, 4)
        cols = im2col(x, kernel=3, stride=1, pad=0)
        assert cols.shape == (27, 2 * 2 * 2)
        # First column = first 3x3 patch of sample 0, channel-major.
        np.testing.assert_array_equal(
            cols[:9, 0], x[0, 0, :3, :3].ravel()
        )

    def test_adjoint_identity(self):
        # <im2col(x), g> == <x, col2im(g)> pins col2im as the exact transpose.
        rng = np.random.default_rng(0)
        for kernel, stride, pad, size in ((3, 1, 1, 8), (3, 2, 1, 8), (2, 2, 0, 6), (5, 3, 2, 9)):
            x = rng.normal(size=(2, 3, size, size))
            cols = im2col(x, kernel, stride, pad)
            g = rng.normal(size=cols.shape)
            lhs = float((cols * g).sum())
            rhs = float((x * col2im(g, x.shape, kernel, stride, pad)).sum())
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestConvForward:
    def test_matches_naive_convolution(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 3, 6, 6))
        layer = Conv2d("c", 3, 4, kernel=3, stride=2, pad=1, bias=True, rng=RngStream(5))
        layer.b.value = rng.normal(size=4)
        out = layer.forward(x, train=True)
        w = layer.w.value
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros_like(out)
        for n in range(2):
            for o in range(4):
                for i in range(out.shape[2]):
                    for j in range(out.shape[3]):
                        patch = xp[n, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3]
                        expected[n, o, i, j] = (patch * w[o]).sum() + layer.b.value[o]
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestForwardHandExamples:
    def test_binary_dense_layer_logits(self):
        # Weights already +-1 binarize exactly (scale 1); with unit scaling the
        # logits for input [1, 1] are [0, 2].
        dense = Dense("d", 2, 2, bias=False, weight_quant=QuantSpec(1.0), rng=RngStream(0))
        dense.w.value = np.array([[1.0, -1.0], [1.0, 1.0]])
        scale = Scaling("s", init_value=1.0)
        out = scale.forward(dense.forward(np.array([[1.0, 1.0]]), train=True), train=True)
        np.testing.assert_allclose(out, [[0.0, 2.0]], atol=1e-12)

    def test_scaling_layer(self):
        layer = Scaling("s", init_value=0.25)
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        np.testing.assert_allclose(layer.forward(x), 0.25 * x, atol=0)
        grad_in = layer.backward(np.ones_like(x))
        assert layer.s.grad == pytest.approx(x.sum())
        np.testing.assert_allclose(grad_in, 0.25 * np.ones_like(x), atol=0)

    def test_batchnorm_identity_with_unit_stats(self):
        bn = BatchNorm2d("bn", 3)
        x = np.random.default_rng(2).normal(size=(4, 3, 5, 5))
        out = bn.forward(x, train=False)  # running stats are (0, 1)
        np.testing.assert_allclose(out, x, rtol=1e-4)


class TestSgdExamples:
    def test_plain_gradient_step(self):
        from hbt.nn import Param, TrainConfig, sgd_step

        p = Param("w", np.array([1.0, 2.0]))
        p.grad = np.array([0.5, -0.5])
        sgd_step([p], TrainConfig(learning_rate=1.0, momentum=0.0, weight_decay=0.0))
        np.testing.assert_allclose(p.value, [0.5, 2.5], atol=0)

    def test_momentum_second_step_is_1_9g(self):
        from hbt.nn import Param, TrainConfig, sgd_step

        cfg = TrainConfig(learning_rate=1.0, momentum=0.9, weight_decay=0.0)
        p = Param("w", np.zeros(1))
        g = np.array([1.0])
        p.grad = g.copy()
        sgd_step([p], cfg)
        w_after_1 = p.value.copy()
        p.grad = g.copy()
        sgd_step([p], cfg)
        np.testing.assert_allclose(w_after_1 - p.value, 1.9 * g, atol=1e-15)

    def test_decay_only(self):
        from hbt.nn import Param, TrainConfig, sgd_step

        cfg = TrainConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.01)
        p = Param("w", np.array([5.0]))
        p.grad = np.zeros(1)
        sgd_step([p], cfg)
        np.testing.assert_allclose(p.value, 5.0 * (1 - 0.1 * 0.01), atol=1e-15)


class TestSteThroughLayers:
    def test_weight_gradient_gated_by_shadow_magnitude(self):
        dense = Dense("d", 2, 1, bias=False, weight_quant=QuantSpec(1.0), rng=RngStream(0))
        dense.w.value = np.array([[0.5, 1.5]])
        out = dense.forward(np.array([[1.0, 1.0]]), train=True)
        dense.backward(np.array([[2.0]]))
        # upstream-to-weight gradient is x * dout = 2.0 for both entries, but
        # |1.5| > 1 blocks the second one.
        np.testing.assert_allclose(dense.w.grad, [[2.0, 0.0]], atol=0)

    def test_input_binarize_backward(self):
        layer = InputBinarize("b", QuantSpec(1.0))
        x = np.array([[0.5, -1.5, 1.0]])
        layer.forward(x, train=True)
        grad = layer.backward(np.array([[1.0, 1.0, 1.0]]))
        np.testing.assert_allclose(grad, [[1.0, 0.0, 1.0]], atol=0)


class TestFiniteDifferenceOracle:
    def sample_params(self, net, per_param, seed):
        rng = np.random.default_rng(seed)
        plan = []
        for p in net.params():
            k = min(per_param, p.value.size)
            plan.append((p, rng.choice(p.value.size, size=k, replace=False)))
        return plan

    def check_network(self, net, x, y, per_param=6, seed=0):
        def loss_fn():
            return softmax_cross_entropy(net.forward(x, train=True), y)[0]

        loss, dlogits = softmax_cross_entropy(net.forward(x, train=True), y)
        net.backward(dlogits)
        plan = [(p, idx, p.grad.ravel()[idx].copy()) for p, idx in self.sample_params(net, per_param, seed)]
        for p, idx, analytic in plan:
            numeric = numeric_gradient(loss_fn, p, idx)
            assert_grads_match(analytic, numeric)

    def test_convnet4_full_precision(self):
        net = build_network(convnet4_spec(channels=(4, 6, 6), image_size=16), seed=3)
        rng = np.random.default_rng(4)
        self.check_network(net, rng.normal(size=(5, 3, 16, 16)), rng.integers(0, 10, size=5))

    def test_dsconv3_full_precision(self):
        net = build_network(dsconv3_spec(channels=(4, 6, 8), image_size=16), seed=5)
        rng = np.random.default_rng(6)
        self.check_network(net, rng.normal(size=(4, 3, 16, 16)), rng.integers(0, 10, size=4))


class TestDepthwisePointwise:
    def test_depthwise_matches_naive(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3, 6, 6))
        layer = DepthwiseConv2d("dw", 3, kernel=3, stride=1, pad=1, rng=RngStream(8))
        out = layer.forward(x, train=True)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros_like(out)
        for n in range(2):
            for c in range(3):
                for i in range(6):
                    for j in range(6):
                        expected[n, c, i, j] = (xp[n, c, i : i + 3, j : j + 3] * layer.w.value[c]).sum()
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_pointwise_matches_tensordot(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 4, 5, 5))
        layer = PointwiseConv2d("pw", 4, 6, rng=RngStream(10))
        out = layer.forward(x, train=True)
        expected = np.einsum("oc,nchw->nohw", layer.w.value, x)
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestNetworkAssembly:
    def test_exclude_io_strips_first_and_last_input_quant(self):
        iq = QuantSpec(1.4)
        spec = convnet4_spec(weight_quant=QuantSpec(1.4), input_quant=iq, exclude_io=True,
                             channels=(4, 4, 4), image_size=16)
        net = build_network(spec, seed=0)
        binarize_layers = [l for l in net.layers if isinstance(l, InputBinarize)]
        assert len(binarize_layers) == 2  # 4 convs, first and last excluded
        spec_all = convnet4_spec(weight_quant=QuantSpec(1.4), input_quant=iq, exclude_io=False,
                                 channels=(4, 4, 4), image_size=16)
        assert len([l for l in build_network(spec_all, seed=0).layers if isinstance(l, InputBinarize)]) == 4

    def test_build_is_seed_deterministic(self):
        a = build_network(convnet4_spec(channels=(4, 4, 4), image_size=16), seed=11)
        b = build_network(convnet4_spec(channels=(4, 4, 4), image_size=16), seed=11)
        c = build_network(convnet4_spec(channels=(4, 4, 4), image_size=16), seed=12)
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa.value, pb.value)
        assert any(
            not np.array_equal(pa.value, pc.value) for pa, pc in zip(a.params(), c.params())
        )

    def test_weight_init_within_ste_window(self):
        net = build_network(convnet4_spec(channels=(8, 8, 8)), seed=13)
        for p in net.params():
            assert np.all(np.abs(p.value) <= 1.0)

    def test_unknown_kind_rejected(self):
        spec = NetworkSpec((3, 8, 8), (LayerSpec("maxpool"),))
        with pytest.raises(ValidationError):
            build_network(spec, seed=0)

    def test_numeric_failure_names_layer(self):
        net = build_network(convnet4_spec(channels=(4, 4, 4), image_size=16), seed=14)
        net.layers[0].w.value[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError, match="conv1"):
            net.forward(np.zeros((1, 3, 16, 16)), train=True)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_loss(self):
        logits = np.zeros((3, 10))
        labels = np.array([0, 5, 9])
        loss, grad = softmax_cross_entropy(logits, labels)
        assert loss == pytest.approx(np.log(10), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        logits = rng.normal(size=(4, 6))
        labels = rng.integers(0, 6, size=4)
        _, grad = softmax_cross_entropy(logits, labels)
        h = 1e-7
        for n in range(4):
            for k in range(6):
                lp = softmax_cross_entropy(logits + h * _one_hot(n, k, logits.shape), labels)[0]
                lm = softmax_cross_entropy(logits - h * _one_hot(n, k, logits.shape), labels)[0]
                assert grad[n, k] == pytest.approx((lp - lm) / (2 * h), abs=1e-6)


def _one_hot(i, j, shape):
    out = np.zeros(shape)
    out[i, j] = 1.0
    return out
