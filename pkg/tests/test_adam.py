"""ADAM stepper contract: hand-traced step, bitwise rollback, clamping."""

import numpy as np
import pytest

from ogcp import Adam, DataError


def fresh(rate=0.1, lower=-np.inf):
    return Adam(rate, lower_bound=lower)


class TestInit:
    def test_vector_buffers_zero(self):
        a = np.array([1.0, 2.0, 3.0])
        adam = fresh()
        adam.init(a)
        for buf in (adam.u, adam.v, adam.u_o, adam.v_o, adam.a_o):
            np.testing.assert_array_equal(buf[0], np.zeros(3))

    def test_matrix_list_buffers_zero(self):
        parts = [np.ones((2, 3)), np.ones((4, 3))]
        adam = fresh()
        adam.init(parts)
        assert [b.shape for b in adam.u] == [(2, 3), (4, 3)]
        assert all((b == 0).all() for b in adam.v)

    def test_reinit_after_steps_restores_zero(self):
        a = np.array([1.0])
        adam = fresh()
        adam.init(a)
        adam.step(a, np.array([2.0]), 1)
        adam.init(a)
        assert (adam.u[0] == 0).all() and (adam.v[0] == 0).all()


class TestStep:
    def test_zero_gradient_leaves_variable_unchanged(self):
        a = np.array([1.0, -2.0])
        adam = fresh()
        adam.init(a)
        out = adam.step(a, np.zeros(2), 1)
        np.testing.assert_array_equal(out, a)

    def test_hand_traced_first_step(self):
        # Scalar trace of the update rules: alpha=0.1, g=4, defaults.
        adam = Adam(0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        a = np.array([1.0])
        adam.init(a)
        out = adam.step(a, np.array([4.0]), 1)
        u = 0.1 * 4.0
        v = 0.001 * 16.0
        rate = 0.1 * np.sqrt(1 - 0.999) / (1 - 0.9)
        want = 1.0 - rate * u / (np.sqrt(v) + 1e-8)
        assert rate == pytest.approx(0.0316228, abs=1e-7)
        assert out[0] == pytest.approx(want, abs=1e-15)
        assert out[0] == pytest.approx(0.9, abs=1e-7)

    def test_lower_bound_clamps_exactly(self):
        adam = Adam(10.0, lower_bound=0.0)
        a = np.array([0.5])
        adam.init(a)
        out = adam.step(a, np.array([100.0]), 1)
        assert out[0] == 0.0

    def test_clamp_holds_over_many_steps(self):
        rng = np.random.default_rng(0)
        adam = Adam(0.5, lower_bound=0.0)
        a = rng.uniform(0.0, 1.0, (4, 3))
        adam.init(a)
        for i in range(1, 30):
            a = adam.step(a, rng.standard_normal((4, 3)), i)
            assert a.min() >= 0.0

    def test_shape_mismatch_rejected(self):
        adam = fresh()
        a = np.ones(3)
        adam.init(a)
        with pytest.raises(DataError):
            adam.step(a, np.ones(4), 1)

    def test_step_count_is_one_based(self):
        adam = fresh()
        a = np.ones(2)
        adam.init(a)
        with pytest.raises(DataError):
            adam.step(a, np.ones(2), 0)


class TestUpdate:
    def test_accept_then_reject_without_steps(self):
        adam = Adam(0.2)
        a = np.array([1.5, -0.5])
        adam.init(a)
        a = adam.update(a, True)
        a2 = adam.update(a, False)
        np.testing.assert_array_equal(a2, a)
        assert adam.rate == pytest.approx(0.02)

    def test_reject_right_after_init_returns_zero_snapshot(self):
        adam = Adam(0.2)
        a = np.array([1.5])
        adam.init(a)
        out = adam.update(a, False)
        np.testing.assert_array_equal(out, np.zeros(1))

    def test_rollback_restores_pre_epoch_state_bitwise(self):
        rng = np.random.default_rng(1)
        adam = Adam(0.3, lower_bound=0.0)
        parts = [rng.uniform(0.1, 1.0, (3, 2)), rng.uniform(0.1, 1.0, (5, 2))]
        adam.init(parts)
        parts = adam.update(parts, True)
        saved = [p.copy() for p in parts]
        saved_u = [u.copy() for u in adam.u]
        saved_v = [v.copy() for v in adam.v]
        i = 0
        for _ in range(7):
            grads = [rng.standard_normal(p.shape) for p in parts]
            parts = adam.step(parts, grads, i + 1)
            i += 1
        restored = adam.update(parts, False)
        for got, want in zip(restored, saved):
            assert (got == want).all()
        for got, want in zip(adam.u, saved_u):
            assert (got == want).all()
        for got, want in zip(adam.v, saved_v):
            assert (got == want).all()

    def test_rate_decays_multiplicatively_over_rejections(self):
        adam = Adam(1.0, rate_decay=0.1)
        a = np.zeros(2)
        adam.init(a)
        for n in range(1, 4):
            a = adam.update(a, False)
            assert adam.rate == pytest.approx(0.1 ** n)

    def test_accept_snapshots_current_moments(self):
        adam = Adam(0.2)
        a = np.array([1.0])
        adam.init(a)
        a = adam.step(a, np.array([2.0]), 1)
        a = adam.update(a, True)
        assert adam.u_o[0][0] == adam.u[0][0] != 0.0
