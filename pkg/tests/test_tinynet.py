import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmo.errors import NumericError
from lsmo.tinynet import AdamState, DenseNet, adam_step, backward, forward, init


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def numeric_grads(net, x, R, h=1e-5):
    """Central differences of ``sum(R * net(x))`` w.r.t. every parameter and the input."""
    def loss():
        return float(np.sum(R * forward(net, x)[0]))

    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = loss()
        x[idx] = old - h
        down = loss()
        x[idx] = old
        gx[idx] = (up - down) / (2 * h)
    return out, gx


def analytic(net, x, R):
    _, cache = forward(net, x)
    return backward(net, cache, R)


class TestForward:
    def test_zero_weights_give_final_bias(self):
        net = init((3, 5, 2), seed=0)
        for W in net.weights:
            W[:] = 0
        net.biases[-1][:] = [1.5, -2.0]
        out = net(np.random.default_rng(0).standard_normal((4, 3)))
        np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (4, 1)))

    def test_identity_single_layer(self):
        net = DenseNet((3, 3), [np.eye(3)], [np.zeros(3)])
        x = np.random.default_rng(1).standard_normal((6, 3))
        np.testing.assert_array_equal(net(x), x)

    def test_bitwise_repeatable(self):
        net = init((4, 16, 16, 2), seed=3)
        x = np.random.default_rng(2).standard_normal((32, 4))
        assert np.array_equal(net(x), net(x))

    def test_shape_mismatch(self):
        net = init((4, 3), seed=0)
        with pytest.raises(ValueError):
            forward(net, np.zeros((2, 5)))
        with pytest.raises(ValueError):
            DenseNet((2, 3), [np.zeros((2, 3))], [np.zeros(3)])


class TestBackward:
    def test_grad_check_small_net(self):
        rng = np.random.default_rng(0)
        net = init((4, 8, 3), seed=1)
        for b in net.biases:
            b[:] = rng.normal(0, 0.1, b.shape)
        x = rng.standard_normal((16, 4))
        R = rng.standard_normal((16, 3))
        grads, gx = analytic(net, x, R)
        num, numx = numeric_grads(net, x, R)
        for name, a, n in zip(net.param_names(), grads, num):
            assert rel_err(a, n) < 1e-6, name
        assert rel_err(gx, numx) < 1e-6

    @settings(max_examples=32, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1),
           hidden=st.lists(st.integers(1, 12), min_size=0, max_size=3))
    def test_grad_check_random_architectures(self, seed, hidden):
        rng = np.random.default_rng(seed)
        sizes = (3, *hidden, 2)
        net = init(sizes, seed=rng)
        for b in net.biases:
            b[:] = rng.normal(0, 0.1, b.shape)
        x = rng.standard_normal((5, 3))
        R = rng.standard_normal((5, 2))
        grads, gx = analytic(net, x, R)
        num, numx = numeric_grads(net, x, R)
        for a, n in zip(grads, num):
            assert rel_err(a, n) < 1e-4
        assert rel_err(gx, numx) < 1e-4

    def test_zero_upstream(self):
        net = init((4, 8, 3), seed=0)
        x = np.ones((2, 4))
        grads, gx = analytic(net, x, np.zeros((2, 3)))
        assert all(not g.any() for g in grads) and not gx.any()

    def test_linear_in_upstream(self):
        net = init((4, 8, 3), seed=0)
        rng = np.random.default_rng(1)
        x, R = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))
        g1, x1 = analytic(net, x, R)
        g2, x2 = analytic(net, x, 2 * R)
        for a, b in zip(g1, g2):
            np.testing.assert_array_equal(2 * a, b)
        np.testing.assert_array_equal(2 * x1, x2)

    def test_foreign_cache_rejected(self):
        a, b = init((2, 3), seed=0), init((2, 3), seed=0)
        _, cache = forward(a, np.zeros((1, 2)))
        with pytest.raises(ValueError):
            backward(b, cache, np.zeros((1, 3)))

    def test_upstream_shape_checked(self):
        net = init((2, 3), seed=0)
        _, cache = forward(net, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            backward(net, cache, np.zeros((4, 2)))

    def test_skipping_input_grad_keeps_param_grads(self):
        net = init((3, 5, 2), seed=1)
        x = np.random.default_rng(1).standard_normal((4, 3))
        _, cache = forward(net, x)
        up = np.ones((4, 2))
        full, gx = backward(net, cache, up)
        part, none = backward(net, cache, up, input_grad=False)
        assert none is None and gx.shape == x.shape
        for a, b in zip(full, part):
            np.testing.assert_array_equal(a, b)


class TestAdam:
    def test_idle_moments_flush_to_zero(self):
        p = [np.zeros(3)]
        state = AdamState.for_params(p)
        adam_step(p, [np.ones(3)], state)
        tiny = np.finfo(float).tiny
        for _ in range(8000):
            adam_step(p, [np.zeros(3)], state)
            m = state.m[0]
            assert not np.any((m != 0) & (np.abs(m) < tiny))
        assert np.all(state.m[0] == 0) and np.all(np.isfinite(p[0]))

    def test_first_step_is_lr_times_sign(self):
        net = init((3, 4), seed=0)
        params = net.params()
        before = [p.copy() for p in params]
        rng = np.random.default_rng(0)
        grads = [rng.uniform(0.5, 2.0, p.shape) * rng.choice([-1, 1], p.shape) for p in params]
        state = AdamState.for_params(params, lr=1e-3)
        adam_step(params, grads, state)
        for p, b, g in zip(params, before, grads):
            np.testing.assert_allclose(b - p, 1e-3 * np.sign(g), atol=1e-9)
        assert state.t == 1

    def test_zero_grads_leave_params(self):
        net = init((3, 4, 2), seed=0)
        params = net.params()
        before = [p.copy() for p in params]
        state = AdamState.for_params(params)
        for _ in range(10):
            adam_step(params, [np.zeros_like(p) for p in params], state)
        for p, b in zip(params, before):
            np.testing.assert_array_equal(p, b)

    def test_matches_textbook_adam(self):
        rng = np.random.default_rng(5)
        p = [rng.standard_normal(4)]
        ref = p[0].copy()
        m = np.zeros(4)
        v = np.zeros(4)
        state = AdamState.for_params(p, lr=0.01)
        for t in range(1, 20):
            g = rng.standard_normal(4)
            adam_step(p, [g], state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p[0], ref, rtol=1e-12)

    def test_non_finite_names_parameter(self):
        net = init((3, 4), seed=0)
        params = net.params()
        grads = [np.zeros_like(p) for p in params]
        grads[1][0] = np.nan
        with pytest.raises(NumericError, match="b0"):
            adam_step(params, grads, AdamState.for_params(params), net.param_names())

    def test_deterministic_training(self):
        def run():
            net = init((2, 8, 1), seed=11)
            rng = np.random.default_rng(0)
            state = AdamState.for_params(net.params())
            for _ in range(50):
                x = rng.standard_normal((16, 2))
                y = x[:, :1] * x[:, 1:]
                out, cache = forward(net, x)
                grads, _ = backward(net, cache, 2 * (out - y) / len(x))
                adam_step(net.params(), grads, state)
            return net.params()

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)


class TestInit:
    def test_same_seed_same_params(self):
        a, b = init((5, 7, 3), seed=4), init((5, 7, 3), seed=4)
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_array_equal(p, q)

    @pytest.mark.parametrize("fan_in", [64, 200, 300])
    def test_weight_std(self, fan_in):
        net = init((fan_in, 256), seed=0)
        target = np.sqrt(2.0 / fan_in)
        assert abs(net.weights[0].std() / target - 1) < 0.15

    def test_zero_biases(self):
        assert all(not b.any() for b in init((3, 9, 9, 2), seed=1).biases)
