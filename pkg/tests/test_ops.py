import numpy as np
import pytest

from core import ops
from core.errors import GradientError, NonFiniteError, ShapeError, TextLocError
from core.gradcheck import finite_diff_check
from core.nn import ParameterSet, mlp
from core.optim import Adam, AdamState, adam_step
from core.tensor import Tape, Tensor, active_tape


def _random(shape, seed=0, low=-1.0, high=1.0):
    return Tensor(np.random.default_rng(seed).uniform(low, high, size=shape))


class TestTape:

    def test_no_recording_outside_tape(self):
        a = Tensor(np.ones(3), requires_grad=True)
        out = ops.sum(ops.square(a))
        assert active_tape() is None
        assert out.node is None

    def test_nested_tape_rejected(self):
        with Tape():
            with pytest.raises(TextLocError):
                with Tape():
                    pass
        assert active_tape() is None

    def test_backward_needs_scalar(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            out = ops.square(a)
        with pytest.raises(ShapeError):
            tape.backward(out)

    def test_shared_input_accumulates(self):
        a = Tensor(np.array([2.0, -3.0]), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.add(ops.mul(a, a), a))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[a], 2.0 * a.data + 1.0)

    def test_unreachable_tensor_reads_zero(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(a)
        grads = tape.backward(loss)
        assert b not in grads
        np.testing.assert_array_equal(grads[b], np.zeros(4))

    def test_non_finite_output_raises(self):
        with pytest.raises(NonFiniteError):
            ops.log(Tensor(np.array([1.0, 0.0])))
        with np.errstate(over="ignore"):
            with pytest.raises(NonFiniteError):
                ops.exp(Tensor(np.array([1000.0])))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestPrimitiveGradients:

    @pytest.mark.parametrize("name, fn", [
        ("relu", lambda x: ops.sum(ops.square(ops.relu(x)))),
        ("exp", lambda x: ops.sum(ops.exp(x))),
        ("square", lambda x: ops.sum(ops.square(x))),
        ("softmax", lambda x: ops.sum(ops.square(ops.softmax(x, axis=1)))),
        ("logsumexp", lambda x: ops.sum(ops.logsumexp(x, axis=0))),
        ("max", lambda x: ops.sum(ops.max(x, axis=1))),
        ("mean", lambda x: ops.mean(ops.square(x), axis=None)),
        ("l2_normalize", lambda x: ops.sum(ops.mul(ops.l2_normalize(x, axis=1), Tensor(np.arange(12.0).reshape(3, 4))))),
        ("transpose", lambda x: ops.sum(ops.square(ops.transpose(x, 0, 1)))),
        ("reshape", lambda x: ops.sum(ops.exp(ops.reshape(x, (4, 3))))),
        ("take", lambda x: ops.sum(ops.square(ops.take(x, (np.array([0, 2, 2]), np.array([1, 3, 3])))))),
        ("broadcast_to", lambda x: ops.sum(ops.square(ops.broadcast_to(ops.reshape(x, (1, 3, 4)), (2, 3, 4))))),
    ])
    def test_unary(self, name, fn):
        result = finite_diff_check(fn, _random((3, 4), seed=len(name)))
        assert result.passed, f"{name}: {result}"

    def test_log(self):
        result = finite_diff_check(lambda x: ops.sum(ops.log(x)), _random((3, 4), low=0.5, high=2.0))
        assert result.passed, str(result)

    @pytest.mark.parametrize("op", [ops.add, ops.sub, ops.mul])
    def test_broadcast_binary(self, op):
        other = _random((1, 4), seed=5)
        left = finite_diff_check(lambda x: ops.sum(ops.square(op(x, other))), _random((3, 4), seed=1))
        right = finite_diff_check(lambda y: ops.sum(ops.square(op(_random((3, 4), seed=1), y))), other)
        assert left.passed and right.passed

    def test_matmul_and_linear(self):
        w = _random((4, 5), seed=2)
        b = _random((5,), seed=3)
        x = _random((2, 3, 4), seed=4)
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.matmul(t, w))), x).passed
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.linear(x, t, b))), w).passed
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.linear(x, w, t))), b).passed

    def test_pairwise_sqdist(self):
        b = _random((5, 3), seed=6)
        assert finite_diff_check(lambda t: ops.sum(ops.pairwise_sqdist(t, b)), _random((4, 3), seed=7)).passed
        assert finite_diff_check(lambda t: ops.sum(ops.pairwise_sqdist(_random((4, 3), seed=7), t)), b).passed

    def test_concat_and_gather(self):
        other = _random((3, 2), seed=8)
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.concat([t, other], axis=1))), _random((3, 4))).passed
        index = np.array([0, 2, 0, 1])
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.gather_rows(t, index))), _random((3, 4))).passed

    def test_attention(self):
        k = _random((2, 5, 4), seed=9)
        v = _random((2, 5, 3), seed=10)
        bias = np.zeros((1, 1, 5))
        bias[..., -1] = -1e9
        q = _random((2, 6, 4), seed=11)
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.attention(t, k, v, bias))), q).passed
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.attention(q, t, v, bias))), k).passed
        assert finite_diff_check(lambda t: ops.sum(ops.square(ops.attention(q, k, t, bias))), v).passed

    def test_cross_entropy(self):
        labels = np.array([0, 3, 1])
        result = finite_diff_check(lambda t: ops.cross_entropy(t, labels), _random((3, 4)))
        assert result.passed
        uniform = ops.cross_entropy(Tensor(np.zeros((3, 4))), labels).item()
        assert uniform == pytest.approx(np.log(4.0))

    def test_mlp_composite(self):
        params = ParameterSet(seed=3)
        params.add_mlp("net", [4, 6, 2])
        x = _random((5, 4))
        weight = params["net.0.weight"]
        result = finite_diff_check(lambda w: ops.sum(ops.square(mlp(params, "net", x, depth=2))), weight)
        assert result.passed


class TestAdam:

    def test_first_step_moves_by_lr(self):
        p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, name="p")
        grad = np.array([0.5, -4.0, 1e-2])
        adam_step([p], [grad], AdamState(), lr=0.1)
        np.testing.assert_allclose(p.data, np.array([0.9, -1.9, 2.9]), atol=1e-6)

    def test_minimizes_quadratic(self):
        params = ParameterSet(seed=0)
        x = params.add("x", np.array([3.0, -4.0]))
        target = Tensor(np.array([1.0, 2.0]))
        optimizer = Adam(params, lr=0.1)
        for _ in range(500):
            with Tape() as tape:
                loss = ops.sum(ops.square(ops.sub(x, target)))
            optimizer.step(tape.backward(loss))
        np.testing.assert_allclose(x.data, target.data, atol=1e-2)

    def test_rejects_bad_input(self):
        p = Tensor(np.zeros(2), requires_grad=True, name="w")
        with pytest.raises(GradientError):
            adam_step([p], [np.array([np.nan, 0.0])], AdamState(), lr=0.1)
        with pytest.raises(ValueError):
            adam_step([p], [np.zeros(2)], AdamState(), lr=-1.0)
        with pytest.raises(ShapeError):
            adam_step([p], [np.zeros(3)], AdamState(), lr=0.1)
