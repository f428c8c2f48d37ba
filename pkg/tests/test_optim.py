import numpy as np
import pytest

from geofield.optim import AdamState, adam_step, init_adam


class TestAdam:
    def test_zero_grad_keeps_params(self):
        params = [np.ones((3, 2)), np.full(4, 2.0)]
        state = init_adam(params)
        new, state = adam_step(params, [np.zeros((3, 2)), np.zeros(4)], state)
        assert state.step == 1
        for p, q in zip(params, new):
            np.testing.assert_array_equal(p, q)

    def test_first_step_has_lr_magnitude(self):
        # bias correction makes |update| ~= lr regardless of grad scale
        for scale in (1e-4, 1.0, 1e4):
            params = [np.zeros(3)]
            grads = [np.full(3, scale)]
            new, _ = adam_step(params, grads, init_adam(params, lr=1e-3))
            np.testing.assert_allclose(new[0], -1e-3, rtol=1e-3)

    def test_matches_manual_unroll(self):
        rng = np.random.default_rng(0)
        p = rng.normal(size=(4,))
        state = init_adam([p], lr=0.01)
        m = np.zeros(4)
        v = np.zeros(4)
        cur = p.copy()
        for t in range(1, 4):
            g = rng.normal(size=(4,))
            (cur_new,), state = adam_step([cur], [g], state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh = m / (1 - 0.9 ** t)
            vh = v / (1 - 0.999 ** t)
            expect = cur - 0.01 * mh / (np.sqrt(vh) + 1e-8)
            np.testing.assert_allclose(cur_new, expect, atol=1e-12)
            cur = cur_new

    def test_quadratic_convergence(self):
        x = np.array([10.0])
        state = init_adam([x], lr=0.1)
        for _ in range(600):
            (x,), state = adam_step([x], [2.0 * (x - 3.0)], state)
        assert abs(x[0] - 3.0) < 1e-2

    def test_defaults_are_standard(self):
        s = init_adam([np.zeros(1)])
        assert (s.lr, s.beta1, s.beta2, s.eps) == (1e-3, 0.9, 0.999, 1e-8)

    def test_float32_preserved(self):
        params = [np.ones(3, dtype=np.float32)]
        grads = [np.ones(3, dtype=np.float32)]
        new, state = adam_step(params, grads, init_adam(params))
        assert new[0].dtype == np.float32
        assert state.m[0].dtype == np.float32

    def test_shape_mismatch_raises(self):
        params = [np.zeros(3)]
        state = init_adam(params)
        with pytest.raises(ValueError):
            adam_step(params, [np.zeros(4)], state)
        with pytest.raises(ValueError):
            adam_step(params, [np.zeros(3), np.zeros(3)], state)

    def test_checkpointed_moments_not_mutated(self):
        params = [np.ones(2)]
        state = init_adam(params)
        adam_step(params, [np.ones(2)], state)
        snapshot = [a for a in state.m]  # captured references
        adam_step(params, [np.ones(2)], state)
        assert snapshot[0] is not state.m[0]  # replaced, not overwritten
