import numpy as np
import numpy.testing as npt
import pytest

from causalgnn import tensor
from causalgnn.tensor import Tape, Tensor


def parameter(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestForward:
    def test_matmul_shapes(self):
        product = Tensor(np.ones((2, 3))) @ Tensor(np.ones((3, 4)))
        assert product.shape == (2, 4)
        npt.assert_array_equal(product.data, np.full((2, 4), 3.0))

    def test_matmul_rejects_mismatched_inner_dimension(self):
        with pytest.raises(tensor.DimensionError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    def test_matmul_rejects_vectors(self):
        with pytest.raises(tensor.DimensionError):
            tensor.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))

    def test_add_rejects_incompatible_shapes(self):
        with pytest.raises(tensor.DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))

    def test_sigmoid_is_stable_for_large_inputs(self):
        values = tensor.sigmoid(Tensor([-1000.0, 0.0, 1000.0])).data
        npt.assert_allclose(values, [0.0, 0.5, 1.0])

    def test_softmax_is_shift_invariant(self):
        logits = np.array([[1.0, 2.0], [1000.0, 1001.0]])
        probs = tensor.softmax(logits)
        npt.assert_allclose(probs[0], probs[1])
        npt.assert_allclose(probs.sum(axis=1), 1.0)

    def test_layer_norm_normalizes_last_axis(self, rng):
        x = Tensor(rng.normal(3.0, 5.0, size=(4, 6)))
        out = tensor.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
        npt.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        npt.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-4)

    def test_layer_norm_needs_two_features(self):
        with pytest.raises(tensor.ContractError):
            tensor.layer_norm(Tensor(np.ones((3, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))

    def test_leaky_relu_slope_range(self):
        with pytest.raises(tensor.ContractError):
            tensor.leaky_relu(Tensor([1.0]), slope=1.5)

    def test_non_finite_values_are_rejected(self):
        with pytest.raises(tensor.NonFiniteError):
            Tensor([1.0, np.nan])

    def test_cross_entropy_rejects_bad_labels(self):
        with pytest.raises(tensor.LabelError):
            tensor.softmax_cross_entropy(Tensor(np.zeros((2, 2))), [0, 2])

    def test_cross_entropy_of_uniform_logits(self):
        loss, probs = tensor.softmax_cross_entropy(Tensor(np.zeros((3, 2))), [0, 1, 1])
        npt.assert_allclose(loss.item(), np.log(2.0))
        npt.assert_allclose(probs.data, 0.5)

    def test_mix_nodes_static_and_batched_agree(self, rng):
        adjacency = rng.random((3, 3))
        nodes = Tensor(rng.normal(size=(2, 3, 4)))
        static = tensor.mix_nodes(adjacency, nodes).data
        batched = tensor.mix_nodes(np.stack([adjacency, adjacency]), nodes).data
        npt.assert_allclose(static, batched)
        npt.assert_allclose(static[0], adjacency.T @ nodes.data[0])


class TestTape:
    def test_no_recording_outside_a_tape(self, rng):
        w = parameter(rng, 2, 2)
        out = (w @ w).sum()
        assert not out.requires_grad
        with pytest.raises(tensor.TapeError):
            tensor.backward(out)

    def test_no_grad_disables_recording(self, rng):
        w = parameter(rng, 2, 2)
        with Tape() as tape:
            with tensor.no_grad():
                (w @ w).sum()
        assert len(tape) == 0

    def test_second_backward_is_an_error(self, rng):
        w = parameter(rng, 3)
        with Tape():
            loss = (w * w).sum()
        tensor.backward(loss)
        with pytest.raises(tensor.TapeError):
            tensor.backward(loss)

    def test_backward_needs_a_scalar(self, rng):
        w = parameter(rng, 3)
        with Tape():
            out = w * w
        with pytest.raises(tensor.ContractError):
            tensor.backward(out)

    def test_gradients_accumulate_until_zeroed(self, rng):
        w = parameter(rng, 3)
        for _ in range(2):
            with Tape():
                loss = (w * 2.0).sum()
            tensor.backward(loss)
        npt.assert_allclose(w.grad, 4.0)
        w.zero_grad()
        npt.assert_array_equal(w.grad, 0.0)

    def test_reused_operand_gets_both_contributions(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape():
            loss = (x * x).sum()
        tensor.backward(loss)
        npt.assert_allclose(x.grad, [6.0])


class TestGradients:
    def check(self, function, tensors):
        assert tensor.gradient_check(function, tensors, samples=5, step=1e-3, rng=np.random.default_rng(0)) < 1e-4

    def test_elementwise_chain(self, rng):
        a, b = parameter(rng, 3, 4), parameter(rng, 4)
        self.check(lambda: (tensor.tanh(a * b - a) + tensor.sigmoid(a + b)).mean(), [a, b])

    def test_matmul_and_leaky_relu(self, rng):
        a, b = parameter(rng, 3, 5), parameter(rng, 5, 2)
        self.check(lambda: tensor.leaky_relu(a @ b, 0.1).sum(), [a, b])

    def test_layer_norm(self, rng):
        x, gamma, beta = parameter(rng, 2, 3, 5), parameter(rng, 5), parameter(rng, 5)
        weights = Tensor(rng.normal(size=(2, 3, 5)))
        self.check(lambda: (tensor.layer_norm(x, gamma, beta) * weights).sum(), [x, gamma, beta])

    def test_softmax_cross_entropy(self, rng):
        w = parameter(rng, 4, 2)
        inputs = Tensor(rng.normal(size=(6, 4)))
        labels = np.array([0, 1, 1, 0, 1, 0])
        self.check(lambda: tensor.softmax_cross_entropy(inputs @ w, labels)[0], [w])

    def test_shape_ops(self, rng):
        x = parameter(rng, 2, 6)
        self.check(lambda: tensor.concat([x[:, :2], x.reshape(4, 3)[1:3, :2]], axis=0).mean(axis=0).sum(), [x])

    def test_mix_nodes(self, rng):
        nodes = parameter(rng, 2, 3, 4)
        adjacency = rng.random((2, 3, 3))
        weights = Tensor(rng.normal(size=(2, 3, 4)))
        self.check(lambda: (tensor.mix_nodes(adjacency, nodes) * weights).sum(), [nodes])

    def test_numerical_gradient_restores_the_value(self, rng):
        x = parameter(rng, 3)
        before = x.data.copy()
        tensor.numerical_gradient(lambda: (x * x).sum().item(), x, (1,))
        npt.assert_array_equal(x.data, before)

    def test_coordinates_next_to_a_kink_are_skipped(self):
        x = Tensor([1e-4, 0.5, -0.7, 2.0], requires_grad=True)
        # the difference quotient across the kink mixes both slopes
        assert tensor.numerical_gradient(lambda: tensor.leaky_relu(x, 0.1).sum().item(), x, (0,)) == pytest.approx(0.595)
        assert tensor.gradient_check(lambda: tensor.leaky_relu(x, 0.1).sum(), [x], samples=4, step=1e-3) < 1e-8
