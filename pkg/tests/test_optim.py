import math

import numpy as np
import pytest

from rahp.optim import Adam, AdamState, adam_step, xavier_uniform_init
from rahp.tensor import Tensor

# one Adam step from fresh state: param 1.0, grad 0.5, lr 0.1,
# betas (0.9, 0.999), eps 1e-8; frozen from a 50-digit evaluation
ADAM_ONE_STEP = 0.900000002


class TestXavierInit:
    def test_bound_small_fans(self):
        rng = np.random.default_rng(0)
        m = xavier_uniform_init(3, 3, rng)
        assert m.shape == (3, 3)
        assert np.all(np.abs(m) <= 1.0)  # sqrt(6/6)

    def test_bound_and_mean_large_fans(self):
        rng = np.random.default_rng(1)
        m = xavier_uniform_init(100, 200, rng)
        bound = math.sqrt(6.0 / 300.0)
        assert m.shape == (200, 100)
        assert np.all(np.abs(m) <= bound)
        # mean of N uniform(-b, b) samples has std b / sqrt(3N)
        sigma = bound / math.sqrt(3 * m.size)
        assert abs(m.mean()) < 3 * sigma

    def test_deterministic_under_seed(self):
        a = xavier_uniform_init(7, 5, np.random.default_rng(42))
        b = xavier_uniform_init(7, 5, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_rejects_non_positive_fans(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            xavier_uniform_init(0, 3, rng)
        with pytest.raises(ValueError):
            xavier_uniform_init(3, -1, rng)


class TestAdam:
    def _params(self, values):
        return {"w": Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)}

    def test_zero_gradients_leave_params_unchanged(self):
        params = self._params([1.0, -2.0])
        state = AdamState.for_params(params, learning_rate=0.1)
        adam_step(params, {"w": np.zeros(2)}, state)
        assert np.array_equal(params["w"].data, [1.0, -2.0])
        assert state.step == 1

    def test_zero_learning_rate(self):
        params = self._params([1.0, -2.0])
        state = AdamState.for_params(params, learning_rate=0.0)
        adam_step(params, {"w": np.array([0.3, -0.7])}, state)
        assert np.array_equal(params["w"].data, [1.0, -2.0])

    def test_one_step_matches_closed_form(self):
        params = self._params([1.0])
        state = AdamState.for_params(params, learning_rate=0.1)
        adam_step(params, {"w": np.array([0.5])}, state)
        assert params["w"].data[0] == pytest.approx(ADAM_ONE_STEP, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        params = self._params([1.0, 2.0])
        state = AdamState.for_params(params)
        with pytest.raises(ValueError, match="shape mismatch"):
            adam_step(params, {"w": np.zeros(3)}, state)

    def test_step_counter_strictly_increases(self):
        params = self._params([1.0])
        state = AdamState.for_params(params)
        for expected in (1, 2, 3):
            adam_step(params, {"w": np.array([0.1])}, state)
            assert state.step == expected

    def test_accumulator_shapes_mirror_params(self):
        params = {
            "a": Tensor(np.zeros((2, 3)), requires_grad=True),
            "b": Tensor(np.zeros(4), requires_grad=True),
        }
        state = AdamState.for_params(params)
        for name, p in params.items():
            assert state.m[name].shape == p.data.shape
            assert state.v[name].shape == p.data.shape

    def test_wrapper_reads_grads(self):
        params = self._params([2.0])
        opt = Adam(params, learning_rate=0.5)
        params["w"].grad = np.array([1.0])
        opt.step()
        assert params["w"].data[0] != 2.0
        opt.zero_grad()
        assert params["w"].grad is None
