"""Reverse-mode tape, primitive ops, SGD with clipping, checkpoint format."""
import math
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vmfvae import tensor as T
from vmfvae.errors import NumericalError, ShapeError
from vmfvae.gradcheck import check_gradients
from vmfvae.selftest import _primitive_cases

finite = st.floats(-10.0, 10.0, allow_nan=False)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestForward:
    def test_matmul_against_loops(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((3, 4))
        out = T.matmul(a, b)
        assert out.shape == (2, 4)
        np.testing.assert_allclose(out.values, naive_matmul(a, b), rtol=1e-14)

    def test_matmul_batched_leading_axes(self):
        rng = np.random.default_rng(1)
        a = T.parameter(rng.standard_normal((2, 5, 3)))
        b = T.parameter(rng.standard_normal((3, 4)))
        w = rng.standard_normal((2, 5, 4))
        assert not check_gradients(lambda: T.sum(T.multiply(T.matmul(a, b), w)), [a, b], 1e-6)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            T.matmul(np.ones((2, 3)), np.ones((4, 2)))

    def test_l2_normalize_unit_vector(self):
        x = T.parameter(np.array([0.6, 0.8, 0.0]))
        y = T.l2_normalize(x)
        np.testing.assert_array_equal(y.values, x.values)
        T.backward(T.sum(T.multiply(y, np.array([1.0, -2.0, 3.0]))))
        assert abs(float(x.grad @ x.values)) < 1e-15

    def test_l2_normalize_rejects_zero(self):
        with pytest.raises(NumericalError):
            T.l2_normalize(np.zeros(3))

    def test_log_softmax_uniform(self):
        v = 7
        np.testing.assert_allclose(T.log_softmax(np.zeros(v)).values, -math.log(v), rtol=1e-15)

    def test_masked_nll_sums_unmasked(self):
        logits = np.log(np.array([[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]))
        out = T.masked_nll(logits, np.array([0, 2]), np.array([1.0, 0.0]))
        assert out.item() == pytest.approx(math.log(2.0))
        per = T.masked_nll(logits, np.array([0, 2]), per_example=True)
        np.testing.assert_allclose(per.values, [math.log(2.0), -math.log(0.8)])

    def test_broadcast_leading_axis(self):
        out = T.add(np.ones((4, 3)), np.arange(3.0))
        assert out.shape == (4, 3)
        with pytest.raises(ShapeError):
            T.add(np.ones((4, 3)), np.ones(4))

    def test_ops_do_not_mutate_inputs(self):
        rng = np.random.default_rng(3)
        for name, (tensors, fn) in _primitive_cases(rng).items():
            before = [t.values.copy() for t in tensors]
            T.backward(fn())
            for t, b in zip(tensors, before):
                assert np.array_equal(t.values, b), name

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
    def test_log_softmax_normalised(self, x):
        assert np.allclose(np.exp(T.log_softmax(x).values).sum(axis=-1), 1.0, atol=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        x = T.parameter(np.arange(6.0).reshape(2, 3))
        T.backward(T.sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_tanh_wx_against_finite_differences(self):
        rng = np.random.default_rng(7)
        w = T.parameter(rng.standard_normal((4, 3)))
        x = T.parameter(rng.standard_normal(4))
        assert not check_gradients(lambda: T.sum(T.tanh(T.matmul(x, w))), [w, x], 1e-4, step=1e-5)

    def test_two_uses_accumulate(self):
        x = T.parameter(np.array([1.0, 2.0]))
        T.backward(T.sum(T.add(T.multiply(x, 3.0), T.exp(x))))
        np.testing.assert_allclose(x.grad, 3.0 + np.exp([1.0, 2.0]))

    def test_tape_cleared(self):
        x = T.parameter(np.ones(3))
        T.backward(T.sum(T.tanh(x)))
        assert len(T.get_tape()) == 0

    def test_errors(self):
        x = T.parameter(np.ones(3))
        with pytest.raises(ShapeError):
            T.backward(T.tanh(x))
        T.reset_tape()
        with pytest.raises(ValueError):
            T.backward(T.Tensor(np.ones(1)))

    def test_no_grad_records_nothing(self):
        x = T.parameter(np.ones(3))
        with T.no_grad():
            y = T.tanh(x)
        assert not y.requires_grad and len(T.get_tape()) == 0

    def test_deterministic(self):
        grads = []
        for _ in range(2):
            rng = np.random.default_rng(11)
            cases = _primitive_cases(rng)
            tensors, fn = cases["log_softmax"]
            T.backward(fn())
            grads.append(tensors[0].grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_tapes_are_thread_local(self):
        errors = []

        def work(seed):
            try:
                for _ in range(50):
                    x = T.parameter(np.random.default_rng(seed).standard_normal(8))
                    T.backward(T.sum(T.multiply(T.tanh(x), 2.0)))
                    np.testing.assert_allclose(x.grad, 2.0 * (1 - np.tanh(x.values) ** 2))
            except Exception as exc:  # surfaced below
                errors.append(exc)

        threads = [threading.Thread(target=work, args=(s,)) for s in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors

    def test_check_finite_guard(self):
        with T.check_finite(), np.errstate(invalid="ignore"):
            with pytest.raises(NumericalError):
                T.log(T.parameter(np.array([-1.0])))
        T.reset_tape()


class TestPrimitiveGradients:
    @pytest.mark.parametrize("op", sorted(_primitive_cases(np.random.default_rng(0))))
    def test_twenty_instances(self, op):
        for i in range(20):
            tensors, fn = _primitive_cases(np.random.default_rng([5, i]))[op]
            assert not check_gradients(fn, tensors, 1e-4), f"{op} instance {i}"


class TestSgd:
    def test_zero_grads_leave_params(self):
        p = T.parameter(np.array([1.0, -2.0]))
        p.grad = np.zeros(2)
        T.sgd_step([p], 0.5, 5.0)
        np.testing.assert_array_equal(p.values, [1.0, -2.0])
        assert p.grad is None

    def test_clipping(self):
        p = T.parameter(np.zeros(2))
        p.grad = np.array([6.0, 8.0])
        norm = T.sgd_step([p], 1.0, 5.0)
        assert norm == 10.0
        assert np.linalg.norm(p.values) == pytest.approx(5.0, rel=1e-15)

    def test_global_norm_across_params(self):
        a, b = T.parameter(np.zeros(1)), T.parameter(np.zeros(1))
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        T.sgd_step([a, b], 1.0, 1.0)
        np.testing.assert_allclose([a.values[0], b.values[0]], [-0.6, -0.8])

    def test_quadratic_bowl(self):
        p = T.parameter(np.array([3.0, -4.0]))
        for _ in range(100):
            T.backward(T.multiply(T.sum(T.multiply(p, p)), 0.5))
            T.sgd_step([p], 0.1, 1e9)
        assert np.linalg.norm(p.values) == pytest.approx(5.0 * 0.9 ** 100, rel=1e-10)

    def test_non_finite_aborts(self):
        p = T.parameter(np.array([1.0]))
        p.grad = np.array([math.nan])
        with pytest.raises(NumericalError):
            T.sgd_step([p], 0.1, 1.0)
        assert p.values[0] == 1.0


class TestInit:
    def test_uniform_bound_and_order_independence(self):
        w = T.init_weight(3, "enc.W", 25, (25, 10))
        assert np.all(np.abs(w.values) <= 0.2)
        T.init_weight(3, "other", 4, (4, 4))
        assert np.array_equal(T.init_weight(3, "enc.W", 25, (25, 10)).values, w.values)
        assert not np.array_equal(T.init_weight(4, "enc.W", 25, (25, 10)).values, w.values)
        assert np.all(T.init_bias("b", (5,)).values == 0.0)


class TestCheckpointFormat:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        tensors = {"a": rng.standard_normal((3, 4)), "é.b": np.array([np.pi, -0.0, 1e-310]),
                   "scalar": np.array(2.5)}
        out = T.decode_tensors(T.encode_tensors(tensors))
        assert list(out) == list(tensors)
        for k in tensors:
            assert out[k].shape == tensors[k].shape
            assert out[k].tobytes() == tensors[k].tobytes()

    def test_layout(self):
        data = T.encode_tensors({"w": np.array([[1.0, 2.0]])})
        assert data[:4] == b"HVAE"
        assert struct.unpack_from("<II", data, 4) == (1, 1)
        assert struct.unpack_from("<I", data, 12) == (1,)
        assert data[16:17] == b"w"
        assert struct.unpack_from("<IQQ", data, 17) == (2, 1, 2)
        assert struct.unpack_from("<2d", data, 37) == (1.0, 2.0)
        assert len(data) == 53

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            T.decode_tensors(b"NOPE" + bytes(8))
