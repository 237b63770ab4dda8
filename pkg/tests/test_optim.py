import numpy as np
import pytest

from dpmac import optim


class TestSgd:
    def test_step_is_plain_descent(self, rng):
        params = [rng.standard_normal((2, 3)), rng.standard_normal(4)]
        grads = [rng.standard_normal((2, 3)), rng.standard_normal(4)]
        out = optim.Sgd().step(params, grads, 0.25)
        for p, g, new in zip(params, grads, out):
            np.testing.assert_allclose(new, p - 0.25 * g, rtol=1e-15)

    def test_does_not_mutate_inputs(self, rng):
        params = [rng.standard_normal(3)]
        snapshot = params[0].copy()
        optim.Sgd().step(params, [np.ones(3)], 0.1)
        np.testing.assert_array_equal(params[0], snapshot)


class TestAdam:
    def test_matches_scalar_reference_for_two_steps(self):
        # independent transcription of the bias-corrected update
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.1
        p = 1.0
        m = v = 0.0
        grads = [0.5, -0.3]
        opt = optim.Adam()
        params = [np.array([1.0])]
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            params = opt.step(params, [np.array([g])], lr)
            assert params[0][0] == pytest.approx(p, rel=1e-14)

    def test_constant_gradient_moves_at_learning_rate(self):
        # with a constant gradient the bias-corrected ratio is g/|g|, so each
        # step has size lr up to the eps regularizer
        opt = optim.Adam()
        params = [np.array([0.0])]
        for _ in range(5):
            prev = params[0][0]
            params = opt.step(params, [np.array([3.0])], 0.01)
            assert params[0][0] - prev == pytest.approx(-0.01, rel=1e-6)

    def test_state_is_per_instance(self):
        g = [np.array([1.0])]
        a = optim.Adam().step([np.array([0.0])], g, 0.1)
        b = optim.Adam().step([np.array([0.0])], g, 0.1)
        np.testing.assert_array_equal(a[0], b[0])

    def test_handles_multiple_blocks_independently(self, rng):
        p1 = [rng.standard_normal((2, 2)), rng.standard_normal(3)]
        g1 = [rng.standard_normal((2, 2)), rng.standard_normal(3)]
        joint = optim.Adam().step([x.copy() for x in p1], g1, 0.05)
        solo0 = optim.Adam().step([p1[0].copy()], [g1[0]], 0.05)
        solo1 = optim.Adam().step([p1[1].copy()], [g1[1]], 0.05)
        np.testing.assert_array_equal(joint[0], solo0[0])
        np.testing.assert_array_equal(joint[1], solo1[0])


class TestFactory:
    def test_known_names(self):
        assert isinstance(optim.make_optimizer("adam"), optim.Adam)
        assert isinstance(optim.make_optimizer("gd"), optim.Sgd)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="optimizer"):
            optim.make_optimizer("rmsprop")
