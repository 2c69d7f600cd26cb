import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rahp.tensor import (
    Tensor,
    add,
    clip,
    concat,
    dot,
    embedding_lookup,
    from_op,
    getitem,
    grad_check,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax_masked,
    stack,
    tanh,
    texp,
    tlog,
    transpose,
    tsum,
)

# softmax of [1, 2, 3], frozen from a 50-digit exp-normalization
SOFTMAX_123 = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]


def t64(values, requires_grad=False):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


class TestTensorBasics:
    def test_shape_size_invariant(self):
        t = Tensor(np.zeros((2, 3)))
        assert t.shape == (2, 3)
        assert t.size == int(np.prod(t.shape))

    def test_default_dtype_is_float32(self):
        assert Tensor([1.0, 2.0]).dtype == np.float32

    def test_float64_preserved(self):
        assert t64([1.0]).dtype == np.float64

    def test_detach_stops_gradient(self):
        x = t64([1.0, 2.0], requires_grad=True)
        y = mul(x, 3.0).detach()
        z = tsum(mul(y, 2.0))
        z.backward()
        assert x.grad is None


class TestBackward:
    def test_sum_gradient_all_ones(self):
        w = t64(np.arange(6.0).reshape(2, 3), requires_grad=True)
        tsum(w).backward()
        assert np.array_equal(w.grad, np.ones((2, 3)))

    def test_tanh_gradient_at_zero(self):
        x = t64(0.0, requires_grad=True)
        tanh(x).backward()
        assert x.grad == pytest.approx(1.0)

    def test_non_scalar_root_rejected(self):
        x = t64([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            mul(x, 2.0).backward()

    def test_repeated_backward_accumulates(self):
        x = t64([1.0, 2.0], requires_grad=True)
        y = tsum(mul(x, 3.0))
        y.backward()
        y.backward()
        assert np.allclose(x.grad, [6.0, 6.0])

    def test_grad_matches_data_shape(self):
        x = t64(np.ones((3, 2)), requires_grad=True)
        tsum(mul(x, x)).backward()
        assert x.grad.shape == x.data.shape

    def test_diamond_graph_accumulates_both_paths(self):
        x = t64(2.0, requires_grad=True)
        y = add(mul(x, 3.0), mul(x, x))  # 3x + x^2, derivative 3 + 2x = 7
        y.backward()
        assert x.grad == pytest.approx(7.0)

    def test_no_grad_builds_no_graph(self):
        x = t64([1.0], requires_grad=True)
        with no_grad():
            y = mul(x, 2.0)
        assert y.lineage is None and not y.requires_grad

    def test_composite_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True, dtype=np.float64)
        c = Tensor(rng.normal(size=2), requires_grad=True, dtype=np.float64)

        def f(a_, b_, c_):
            h = tanh(matmul(a_, b_))
            return tsum(mul(sigmoid(matmul(h, c_)), texp(mul(c_, 0.1)).sum()))

        assert grad_check(f, [a, b, c]) < 1e-4


class TestOps:
    def test_matmul_shapes_and_grads(self):
        rng = np.random.default_rng(1)
        cases = [((2, 3), (3, 4)), ((3,), (3, 4)), ((2, 3), (3,)), ((3,), (3,))]
        for sa, sb in cases:
            a = Tensor(rng.normal(size=sa), requires_grad=True, dtype=np.float64)
            b = Tensor(rng.normal(size=sb), requires_grad=True, dtype=np.float64)
            err = grad_check(lambda x, y: tsum(mul(matmul(x, y), 1.37)), [a, b])
            assert err < 1e-6, (sa, sb)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_bias_broadcast_backward(self):
        x = t64(np.ones((4, 3)), requires_grad=True)
        b = t64([1.0, 2.0, 3.0], requires_grad=True)
        tsum(add(x, b)).backward()
        assert np.allclose(b.grad, [4.0, 4.0, 4.0])

    def test_structural_ops_gradients(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.normal(size=(2, 4)), requires_grad=True, dtype=np.float64)

        def f(a_, b_):
            joined = concat([a_, b_], axis=0)
            sliced = getitem(joined, (slice(1, 4), slice(0, 3)))
            return tsum(mul(transpose(sliced), reshape(Tensor(np.ones(9, dtype=np.float64)), (3, 3))))

        assert grad_check(f, [a, b]) < 1e-6

    def test_stack_gradient(self):
        rows = [Tensor(np.full(3, float(i)), requires_grad=True, dtype=np.float64)
                for i in range(4)]
        tsum(mul(stack(rows), 2.0)).backward()
        for row in rows:
            assert np.allclose(row.grad, 2.0)

    def test_clip_gates_gradient(self):
        x = t64([-20.0, 0.5, 20.0], requires_grad=True)
        tsum(clip(x, -15.0, 15.0)).backward()
        assert np.allclose(x.grad, [0.0, 1.0, 0.0])

    def test_relu_log_exp_grads(self):
        x = Tensor(np.array([0.3, 1.7, 2.4]), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda x_: tsum(add(relu(x_), tlog(x_))), [x]) < 1e-6

    def test_mean(self):
        x = t64([1.0, 2.0, 3.0, 6.0], requires_grad=True)
        m = mean(x)
        assert float(m.data) == pytest.approx(3.0)
        m.backward()
        assert np.allclose(x.grad, 0.25)

    def test_embedding_lookup_scatter_adds_repeats(self):
        table = t64(np.arange(12.0).reshape(4, 3), requires_grad=True)
        out = embedding_lookup(table, [1, 1, 3])
        tsum(out).backward()
        assert np.allclose(table.grad[1], 2.0)
        assert np.allclose(table.grad[3], 1.0)
        assert np.allclose(table.grad[0], 0.0)


class TestSoftmaxMasked:
    def test_uniform_logits(self):
        out = softmax_masked(t64([0.0, 0.0]), np.array([True, True]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_singleton_support(self):
        out = softmax_masked(t64([7.3, -2.0]), np.array([False, True]))
        assert out.data[0] == 0.0
        assert out.data[1] == pytest.approx(1.0)

    def test_formula_oracle(self):
        out = softmax_masked(t64([1.0, 2.0, 3.0]), np.array([True, True, True]))
        assert np.allclose(out.data, SOFTMAX_123, atol=1e-12)

    def test_all_masked_rejected(self):
        with pytest.raises(ValueError, match="empty attention support"):
            softmax_masked(t64([1.0, 2.0]), np.array([False, False]))

    def test_matrix_row_with_empty_support_rejected(self):
        logits = t64(np.zeros((2, 3)))
        mask = np.array([[True, True, False], [False, False, False]])
        with pytest.raises(ValueError, match="empty attention support"):
            softmax_masked(logits, mask)

    def test_masked_positions_exactly_zero(self):
        out = softmax_masked(t64([5.0, 1.0, -3.0, 2.0]),
                             np.array([True, False, True, True]))
        assert out.data[1] == 0.0
        assert out.data[[0, 2, 3]].sum() == pytest.approx(1.0, abs=1e-6)

    def test_non_finite_logits_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            softmax_masked(t64([np.inf, 1.0]), np.array([True, True]))

    def test_matrix_rows_with_shared_mask(self):
        rng = np.random.default_rng(3)
        logits = Tensor(rng.normal(size=(4, 5)), dtype=np.float64)
        mask = np.array([True, True, True, False, False])
        out = softmax_masked(logits, mask)
        assert np.allclose(out.data[:, 3:], 0.0)
        assert np.allclose(out.data.sum(axis=1), 1.0)

    def test_gradient(self):
        rng = np.random.default_rng(4)
        logits = Tensor(rng.normal(size=6), requires_grad=True, dtype=np.float64)
        mask = np.array([True, True, False, True, True, False])
        weights = Tensor(rng.normal(size=6), dtype=np.float64)

        def f(x):
            return tsum(mul(softmax_masked(x, mask), weights))

        assert grad_check(f, [logits]) < 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(min_value=-30, max_value=30), min_size=1, max_size=64),
           st.data())
    def test_distribution_property(self, logits, data):
        mask = np.array(
            data.draw(st.lists(st.booleans(), min_size=len(logits), max_size=len(logits)))
        )
        if not mask.any():
            mask[data.draw(st.integers(0, len(logits) - 1))] = True
        out = softmax_masked(t64(logits), mask).data
        assert np.all(out[~mask] == 0.0)
        assert np.all(out[mask] > 0.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(min_value=-20, max_value=20), min_size=2, max_size=32),
           st.floats(min_value=-50, max_value=50))
    def test_shift_invariance(self, logits, shift):
        mask = np.ones(len(logits), dtype=bool)
        base = softmax_masked(t64(logits), mask).data
        shifted = softmax_masked(t64([v + shift for v in logits]), mask).data
        assert np.max(np.abs(base - shifted)) < 1e-9


class TestGradCheck:
    def test_dot_bilinear_exactness(self):
        rng = np.random.default_rng(5)
        a = Tensor(rng.normal(size=4), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.normal(size=4), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda x, y: dot(x, y), [a, b]) < 1e-9

    def test_detects_wrong_gradient(self):
        def bad_square(x):
            out = x.data * x.data

            def backward_fn(g):
                return (g * 3.0 * x.data,)  # deliberately wrong: should be 2x

            return from_op(out, (x,), backward_fn)

        x = Tensor(np.array(1.5), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda x_: bad_square(x_), [x]) > 1e-2

    def test_requires_float64(self):
        x = Tensor(np.array(1.0, dtype=np.float32), requires_grad=True)
        with pytest.raises(ValueError, match="float64"):
            grad_check(lambda x_: mul(x_, x_), [x])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_output_rejected(self):
        x = Tensor(np.array(0.0), requires_grad=True, dtype=np.float64)
        with pytest.raises(ValueError, match="non-finite"):
            grad_check(lambda x_: tlog(x_), [x])
