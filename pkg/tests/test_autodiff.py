import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topomoe.autodiff import ParamStore, Tape, Tensor, grad_check, linear, softmax
from topomoe.errors import RoutingError, ShapeError

from .oracles import matmul_oracle


class TestLinear:
    def test_identity_weight(self):
        tape = Tape()
        x = Tensor([[1.0, 2.0]])
        y = linear(tape, x, np.eye(2), np.zeros(2))
        assert np.array_equal(y.value, x.value)

    def test_identity_plus_bias(self):
        tape = Tape()
        y = linear(tape, np.array([1.0, 2.0]), np.eye(2), np.ones(2))
        assert np.array_equal(y.value, [2.0, 3.0])

    def test_matches_naive_matmul(self, rng):
        a = rng.standard_normal((3, 4))
        w = rng.standard_normal((4, 2))
        b = rng.standard_normal(2)
        tape = Tape()
        y = linear(tape, a, w, b)
        assert np.allclose(y.value, matmul_oracle(a, w) + b, atol=1e-12)

    def test_shape_error_names_shapes(self):
        tape = Tape()
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            tape.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_gradients(self, rng):
        store = ParamStore(seed=1)
        w = store.add("w", (3, 2))
        b = store.add("b", (2,))
        x = rng.standard_normal((4, 3))

        def loss_fn():
            tape = Tape()
            y = tape.linear(x, w, b)
            return tape, tape.sum(tape.square(y))

        assert grad_check(loss_fn, store, h=1e-5) < 1e-8


class TestSoftmax:
    def test_uniform(self):
        tape = Tape()
        s = softmax(tape, np.zeros(3))
        assert np.allclose(s.value, [1 / 3] * 3, atol=1e-15)

    def test_masked_closed_form(self):
        tape = Tape()
        z = np.array([-np.inf, -np.inf, -np.inf, 4.0, 5.0])
        s = softmax(tape, z).value
        e = math.e
        assert np.array_equal(s[:3], [0.0, 0.0, 0.0])
        assert s[3] == pytest.approx(1 / (1 + e), abs=1e-12)
        assert s[4] == pytest.approx(e / (1 + e), abs=1e-12)
        assert abs(s.sum() - 1.0) <= 1e-12

    def test_all_masked_raises(self):
        with pytest.raises(RoutingError):
            softmax(Tape(), np.full(4, -np.inf))

    def test_jacobian_against_analytic(self, rng):
        for _ in range(5):
            z = rng.standard_normal(5)
            s_val = np.exp(z - z.max())
            s_val /= s_val.sum()
            jac = np.diag(s_val) - np.outer(s_val, s_val)
            for row in range(5):
                tape = Tape()
                zt = Tensor(z, requires_grad=True)
                zt.grad = np.zeros(5)
                out = tape.take(tape.softmax(zt), row)
                tape.backward(out)
                assert np.allclose(zt.grad, jac[row], atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(
        z=st.lists(st.floats(-30, 30), min_size=2, max_size=6),
        c=st.floats(-20, 20),
    )
    def test_shift_invariance(self, z, c):
        z = np.asarray(z)
        a = softmax(Tape(), z).value
        b = softmax(Tape(), z + c).value
        assert np.allclose(a, b, atol=1e-12)


class TestTape:
    def test_backward_twice_errors(self):
        tape = Tape()
        t = Tensor(np.array(2.0), requires_grad=True)
        out = tape.square(t)
        tape.backward(out)
        with pytest.raises(RuntimeError, match="already ran"):
            tape.backward(out)

    def test_reverse_accumulation_through_shared_input(self):
        tape = Tape()
        t = Tensor(np.array(3.0), requires_grad=True)
        out = tape.add(tape.square(t), tape.scale(t, 4.0))  # t^2 + 4t
        tape.backward(out)
        assert t.grad == pytest.approx(2 * 3.0 + 4.0)

    def test_determinism_bitwise(self, rng):
        x = rng.standard_normal((6, 4))

        def run():
            store = ParamStore(seed=9)
            w = store.add("w", (4, 3))
            b = store.add("b", (3,))
            tape = Tape()
            y = tape.sum(tape.tanh(tape.linear(x, w, b)))
            tape.backward(y)
            return y.value.copy(), w.grad.copy()

        v1, g1 = run()
        v2, g2 = run()
        assert np.array_equal(v1, v2)
        assert np.array_equal(g1, g2)


class TestParamStore:
    def test_glorot_bounds_and_zero_bias(self):
        store = ParamStore(seed=0)
        w = store.add("w", (10, 20))
        b = store.add("b", (20,))
        bound = math.sqrt(6.0 / 30.0)
        assert np.all(np.abs(w.value) <= bound)
        assert np.array_equal(b.value, np.zeros(20))

    def test_grad_buffers_match_shapes_and_zero(self):
        store = ParamStore(seed=0)
        w = store.add("w", (3, 3))
        w.grad += 1.0
        store.zero_grad()
        assert np.array_equal(w.grad, np.zeros((3, 3)))

    def test_duplicate_name_rejected(self):
        store = ParamStore(seed=0)
        store.add("w", (2, 2))
        with pytest.raises(ValueError):
            store.add("w", (2, 2))


class TestGradCheck:
    def test_quadratic_is_exact(self):
        store = ParamStore(seed=3)
        theta = store.add("theta", (4, 3))

        def loss_fn():
            tape = Tape()
            return tape, tape.scale(tape.sum(tape.square(theta)), 0.5)

        assert grad_check(loss_fn, store, h=1e-5) <= 1e-8

    def test_gate_layer_on_fixed_input(self, rng):
        store = ParamStore(seed=5)
        w1 = store.add("w1", (10, 6))
        b1 = store.add("b1", (6,))
        w2 = store.add("w2", (6, 3))
        b2 = store.add("b2", (3,))
        x = rng.uniform(0, 1, size=(2, 10))

        def loss_fn():
            tape = Tape()
            h = tape.tanh(tape.linear(x, w1, b1))
            out = tape.softmax(tape.linear(h, w2, b2))
            return tape, tape.sum(tape.square(out))

        assert grad_check(loss_fn, store, h=1e-5) < 1e-5

    def test_scatter_gather_ops(self, rng):
        store = ParamStore(seed=6)
        table = store.add("table", (5, 4))
        idx = np.array([0, 3, 3, 1])
        seg = np.array([0, 0, 1, 1])

        def loss_fn():
            tape = Tape()
            rows = tape.gather_rows(table, idx)
            pooled = tape.scatter_sum(tape.shifted_softplus(rows), seg, 2)
            return tape, tape.sum(tape.square(pooled))

        assert grad_check(loss_fn, store, h=1e-5) < 1e-6
