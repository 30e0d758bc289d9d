"""Layers, loss, init, Adam, and the gradient-check harness itself."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

import odnext.autograd as ag
from odnext.nn import (
    Adam,
    ContractViolation,
    cross_entropy,
    embedding_init,
    embedding_lookup,
    glorot_uniform,
    grad_check,
    linear,
)


class TestLinear:
    def test_value(self):
        W = ag.parameter(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        x = ag.constant(np.array([1.0, 0.0, -1.0]))
        b = ag.parameter(np.array([0.5, -0.5]))
        np.testing.assert_allclose(linear(W, x, b).value, [-3.5, -4.5])

    def test_shape_mismatch(self):
        W = ag.parameter(np.zeros((3, 2)))
        with pytest.raises(ContractViolation):
            linear(W, ag.constant(np.zeros(4)))


class TestEmbedding:
    def test_lookup_grad_touches_one_row(self):
        table = ag.parameter(np.arange(8.0).reshape(4, 2))
        ag.mean_all(embedding_lookup(table, 2)).backward()
        expected = np.zeros((4, 2))
        expected[2] = 0.5
        np.testing.assert_allclose(table.grad, expected)

    def test_range_check(self):
        table = ag.parameter(np.zeros((4, 2)))
        with pytest.raises(ContractViolation):
            embedding_lookup(table, 4)
        with pytest.raises(ContractViolation):
            embedding_lookup(table, -1)

    def test_init_bounds(self):
        e = embedding_init(np.random.default_rng(0), 50, 16)
        assert e.shape == (50, 16)
        assert (np.abs(e) <= 0.1).all()
        assert np.abs(e).max() > 0.05  # actually spread out


class TestCrossEntropy:
    def test_value(self):
        p = ag.constant(np.array([0.2, 0.5, 0.3]))
        assert cross_entropy(p, 1).item() == pytest.approx(-np.log(0.5), rel=1e-9)

    def test_rejects_non_distribution(self):
        with pytest.raises(ContractViolation):
            cross_entropy(ag.constant(np.array([0.5, 0.2])), 0)
        with pytest.raises(ContractViolation):
            cross_entropy(ag.constant(np.array([1.5, -0.5])), 0)

    def test_rejects_bad_target(self):
        p = ag.constant(np.array([0.5, 0.5]))
        with pytest.raises(ContractViolation):
            cross_entropy(p, 2)

    def test_logit_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(3)
        z = ag.parameter(rng.normal(size=7))
        target = 4
        cross_entropy(ag.softmax(z), target).backward()
        s = ag.softmax(ag.constant(z.value)).value
        onehot = np.eye(7)[target]
        np.testing.assert_allclose(z.grad, s - onehot, atol=1e-9)


class TestGlorot:
    def test_bounds_and_shape(self):
        W = glorot_uniform(np.random.default_rng(1), 30, 20)
        a = np.sqrt(6.0 / 50)
        assert W.shape == (30, 20)
        assert (np.abs(W) <= a).all()

    def test_deterministic(self):
        a = glorot_uniform(np.random.default_rng(5), 8, 8)
        b = glorot_uniform(np.random.default_rng(5), 8, 8)
        np.testing.assert_array_equal(a, b)


class TestAdam:
    def test_first_step_magnitude(self):
        # With constant gradient, the bias-corrected first step is
        # lr * g / (|g| + eps) = ~lr * sign(g).
        p = ag.parameter(np.array([1.0, -2.0, 3.0]))
        opt = Adam({"p": p}, lr=0.01)
        p.grad = np.array([0.5, -0.25, 1e-3])
        before = p.value.copy()
        opt.step()
        step = p.value - before
        np.testing.assert_allclose(np.abs(step), 0.01, rtol=1e-4)
        np.testing.assert_allclose(np.sign(step), [-1.0, 1.0, -1.0])

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(9)
        p = ag.parameter(rng.normal(size=(3, 2)))
        ref = p.value.copy()
        m = np.zeros_like(ref)
        v = np.zeros_like(ref)
        opt = Adam({"p": p}, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8)
        for t in range(1, 6):
            g = rng.normal(size=(3, 2))
            p.grad = g.copy()
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh = m / (1 - 0.9**t)
            vh = v / (1 - 0.999**t)
            ref -= 0.05 * mh / (np.sqrt(vh) + 1e-8)
            np.testing.assert_allclose(p.value, ref, atol=1e-12)
            p.zero_grad()

    def test_none_grad_is_skipped(self):
        p = ag.parameter(np.ones(2))
        q = ag.parameter(np.ones(2))
        opt = Adam({"p": p, "q": q}, lr=0.1)
        p.grad = np.ones(2)
        opt.step()
        assert (p.value != 1.0).all()
        np.testing.assert_array_equal(q.value, np.ones(2))

    def test_zero_grad(self):
        p = ag.parameter(np.ones(2))
        p.grad = np.ones(2)
        Adam({"p": p}).zero_grad()
        assert p.grad is None or not p.grad.any()

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_descends_a_quadratic(self, seed):
        rng = np.random.default_rng(seed)
        target = rng.normal(size=4)
        p = ag.parameter(np.zeros(4))
        opt = Adam({"p": p}, lr=0.1)
        first = None
        for _ in range(300):
            diff = ag.sub(p, ag.constant(target))
            loss = ag.mean_all(ag.mul(diff, diff))
            if first is None:
                first = loss.item()
            opt.zero_grad()
            loss.backward()
            opt.step()
        final = float(np.mean((p.value - target) ** 2))
        assert final < first * 0.05


class TestGradCheck:
    def test_quadratic_exact(self):
        p = ag.parameter(np.array([3.0]))
        err = grad_check(lambda: ag.mean_all(ag.mul(p, p)), {"p": p})
        assert err < 1e-8

    def test_linear_softmax_ce(self):
        rng = np.random.default_rng(12)
        W = ag.parameter(glorot_uniform(rng, 6, 9))
        b = ag.parameter(np.zeros(9))
        x = ag.constant(rng.normal(size=6))

        def loss():
            return cross_entropy(ag.softmax(linear(W, x, b)), 4)

        assert grad_check(loss, {"W": W, "b": b}) < 1e-6

    def test_detects_a_wrong_gradient(self):
        p = ag.parameter(np.array([1.5]))

        def loss():
            out = ag.mean_all(ag.mul(p, p))
            return out

        # Sabotage: double the analytic gradient via a second backward pass.
        def bad_loss():
            out = loss()
            extra = ag.mean_all(ag.mul(p, p))
            extra.backward()  # pollutes p.grad before the checker's backward
            return out

        assert grad_check(bad_loss, {"p": p}) > 0.3

    def test_leaves_grads_clean(self):
        p = ag.parameter(np.array([2.0]))
        grad_check(lambda: ag.mean_all(ag.mul(p, p)), {"p": p})
        assert p.grad is None or not p.grad.any()
