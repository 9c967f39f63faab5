"""Tensor core: primitive ops, tape semantics, and the scalar recurrence."""

import math

import numpy as np
import pytest

from tlanet import tensor as T
from tlanet.gradcheck import check_gradients


class TestTensorBasics:
    def test_flat_storage_invariant(self):
        t = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.values.shape == (4,)
        assert t.grad.shape == (4,)
        assert np.all(t.grad == 0.0)

    def test_shape_value_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.Tensor([1.0, 2.0, 3.0], shape=(2, 2))

    def test_zero_grad(self):
        t = T.Tensor([1.0, 2.0], requires_grad=True)
        t.grad[:] = 5.0
        t.zero_grad()
        assert np.all(t.grad == 0.0)


class TestMatmul:
    def test_identity(self):
        m = T.Tensor([[2.0, -1.0], [0.5, 3.0]])
        eye = T.Tensor(np.eye(2))
        assert np.array_equal(T.matmul(eye, m).array, m.array)

    def test_hand_product(self):
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.Tensor([[1.0], [1.0]])
        assert np.array_equal(T.matmul(a, b).array, [[3.0], [7.0]])

    def test_shape_error_names_both_shapes(self):
        a = T.Tensor(np.zeros((2, 3)))
        b = T.Tensor(np.zeros((2, 3)))
        with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(a, b)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a = T.Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
        b = T.Tensor(rng.uniform(-2, 2, (4, 2)), requires_grad=True)
        err = check_gradients(lambda: T.total_sum(T.matmul(a, b)), [a, b])
        assert err <= 1e-6


class TestActivations:
    def test_fixed_points(self):
        x = T.Tensor([0.0, -3.0])
        assert T.tanh(x).array[0] == 0.0
        assert T.sigmoid(x).array[0] == 0.5
        assert T.relu(x).array[1] == 0.0

    def test_sigmoid_symmetry(self):
        rng = np.random.default_rng(1)
        xs = rng.uniform(-20, 20, 200)
        total = T.sigmoid(T.Tensor(xs)).array + T.sigmoid(T.Tensor(-xs)).array
        assert np.allclose(total, 1.0, atol=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            T.activation(T.Tensor([1.0]), "gelu")

    @pytest.mark.parametrize("kind", ["tanh", "sigmoid", "relu"])
    def test_gradients(self, kind):
        rng = np.random.default_rng(2)
        x = T.Tensor(rng.uniform(-2, 2, (3, 4)) + 0.1, requires_grad=True)
        err = check_gradients(lambda: T.total_sum(T.activation(x, kind)), [x])
        assert err <= 1e-6


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(T.Tensor([0.0, 0.0, 0.0])).array
        assert np.allclose(out, 1.0 / 3.0, atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-5, 5, 6)
            c = rng.uniform(-100, 100)
            a = T.softmax(T.Tensor(x)).array
            b = T.softmax(T.Tensor(x + c)).array
            assert np.allclose(a, b, atol=1e-12)

    def test_sum_is_one(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-50, 50, rng.integers(1, 9))
            out = T.softmax(T.Tensor(x)).array
            assert abs(out.sum() - 1.0) <= 1e-12
            assert (out > 0).all()

    def test_extreme_logit_is_stable(self):
        out = T.softmax(T.Tensor([100.0, 0.0, 0.0])).array
        assert out[0] >= 1.0 - 1e-40

    def test_empty_rejected(self):
        with pytest.raises(T.ShapeError):
            T.softmax(T.Tensor(np.zeros(0)))


class TestConcat:
    def test_single_part_identity(self):
        v = T.Tensor([1.0, 2.0, 3.0])
        assert np.array_equal(T.concat([v], axis=0).array, v.array)

    def test_two_vectors(self):
        out = T.concat([T.Tensor([1.0]), T.Tensor([2.0])], axis=0)
        assert np.array_equal(out.array, [1.0, 2.0])

    def test_ragged_rejected(self):
        a = T.Tensor(np.zeros((2, 3)))
        b = T.Tensor(np.zeros((3, 3)))
        with pytest.raises(T.ShapeError, match="ragged"):
            T.concat([a, b], axis=1)

    def test_gradient_routes_to_parts(self):
        a = T.Tensor([1.0, 2.0], requires_grad=True)
        b = T.Tensor([3.0], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.concat([a, b], axis=0))
        tape.backward(loss)
        assert np.array_equal(a.grad, [1.0, 1.0])
        assert np.array_equal(b.grad, [1.0])


class TestBackward:
    def test_sum_gives_ones(self):
        w = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(w)
        tape.backward(loss)
        assert np.all(w.grad == 1.0)

    def test_zero_scale_gives_zeros(self):
        x = T.Tensor([1.0, -2.0, 3.0], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.scale(x, 0.0))
        tape.backward(loss)
        assert np.all(x.grad == 0.0)

    def test_additive_accumulation(self):
        x = T.Tensor([1.5, -0.5], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.mul(x, x))
        tape.backward(loss)
        first = x.grad.copy()
        tape.backward(loss)
        assert np.allclose(x.grad, 2.0 * first)

    def test_non_scalar_loss_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with T.Tape() as tape:
            y = T.mul(x, x)
        with pytest.raises(T.GraphError, match="scalar"):
            tape.backward(y)

    def test_functional_spelling(self):
        x = T.Tensor([2.0], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.mul(x, x))
        T.backward(loss, tape)
        assert np.allclose(x.grad, [4.0])

    def test_no_recording_outside_tape(self):
        x = T.Tensor([1.0], requires_grad=True)
        y = T.mul(x, x)
        assert not y.requires_grad

    def test_shared_input_used_twice(self):
        x = T.Tensor([3.0], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.add(T.mul(x, x), T.mul(x, x)))
        tape.backward(loss)
        assert np.allclose(x.grad, [12.0])


class TestMiscOps:
    def test_repeat_vector(self):
        v = T.Tensor([1.0, 2.0])
        out = T.repeat_vector(v, 3)
        assert np.array_equal(out.array, [[1.0, 2.0]] * 3)
        single = T.repeat_vector(v, 1)
        assert np.array_equal(single.array, [[1.0, 2.0]])

    def test_repeat_vector_rejects_zero(self):
        with pytest.raises(ValueError):
            T.repeat_vector(T.Tensor([1.0]), 0)

    def test_repeat_vector_gradient_sums(self):
        v = T.Tensor([1.0, 2.0], requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.repeat_vector(v, 4))
        tape.backward(loss)
        assert np.array_equal(v.grad, [4.0, 4.0])

    def test_lookup_duplicate_accumulates(self):
        table = T.Tensor(np.ones((5, 2)), requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.lookup_rows(table, [2, 2, 2, 4], padding_idx=0))
        tape.backward(loss)
        grads = table.grad_array
        assert np.array_equal(grads[2], [3.0, 3.0])
        assert np.array_equal(grads[4], [1.0, 1.0])
        assert np.all(grads[[0, 1, 3]] == 0.0)

    def test_lookup_padding_receives_no_gradient(self):
        table = T.Tensor(np.ones((4, 2)), requires_grad=True)
        with T.Tape() as tape:
            loss = T.total_sum(T.lookup_rows(table, [0, 0, 1], padding_idx=0))
        tape.backward(loss)
        assert np.all(table.grad_array[0] == 0.0)
        assert np.all(table.grad_array[1] == 1.0)

    def test_lookup_out_of_range_names_id(self):
        table = T.Tensor(np.ones((4, 2)))
        with pytest.raises(IndexError, match="7"):
            T.lookup_rows(table, [1, 7])

    def test_clip_log_floor(self):
        out = T.clip_log(T.Tensor([0.0]))
        assert math.isclose(out.array[0], math.log(1e-12))

    def test_dropout_inference_rate_zero_is_identity(self):
        x = T.Tensor([1.0, 2.0])
        assert T.dropout(x, 0.0, np.random.default_rng(0)) is x

    def test_dropout_preserves_expectation(self):
        rng = np.random.default_rng(11)
        x = T.Tensor(np.ones(100))
        total = 0.0
        trials = 10_000
        for _ in range(trials):
            total += T.dropout(x, 0.2, rng).array.mean()
        assert abs(total / trials - 1.0) <= 0.02


class TestScalarRecurrence:
    def test_identity_weight(self):
        assert T.scalar_recurrence(T.ScalarRecurrence(1.0, 7.0, 100)) == 7.0

    def test_growth_exact(self):
        assert T.scalar_recurrence(T.ScalarRecurrence(2.0, 1.0, 10)) == 1024.0

    def test_decay_exact(self):
        assert T.scalar_recurrence(T.ScalarRecurrence(0.5, 1.0, 10)) == 0.0009765625

    def test_trajectory_matches_closed_form(self):
        traj = T.recurrence_trajectory(T.ScalarRecurrence(2.0, 3.0, 8))
        assert traj == [3.0 * 2.0 ** i for i in range(9)]

    def test_dichotomy_at_long_horizon(self):
        grow = T.scalar_recurrence(T.ScalarRecurrence(2.0, 1.0, 200))
        decay = T.scalar_recurrence(T.ScalarRecurrence(0.5, 1.0, 200))
        assert abs(grow) > 1e12
        assert abs(decay) < 1e-12

    def test_regime_labels(self):
        assert T.recurrence_regime(2.0) == "explodes"
        assert T.recurrence_regime(0.5) == "vanishes"
        assert T.recurrence_regime(1.0) == "neutral"
        assert T.recurrence_regime(-2.0) == "explodes"

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError):
            T.ScalarRecurrence(1.0, 1.0, -1)
