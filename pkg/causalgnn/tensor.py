"""Dense 64-bit tensors with tape based reverse mode automatic differentiation

Operations record themselves on the active `Tape` when at least one input
requires gradients. Recording only happens inside a tape context:

    with Tape():
        loss, probs = softmax_cross_entropy(logits, labels)
    backward(loss)

A tape can be walked backward once; gradients accumulate into the `grad`
buffers until `zero_grad` is called.
"""

from contextlib import contextmanager
from itertools import count
from threading import local

import numpy as np

from causalgnn import log
from causalgnn.errors import ContractError, NumericalError


__all__ = ('Tensor', 'Tape', 'DimensionError', 'NonFiniteError', 'TapeError', 'LabelError',
           'matmul', 'add', 'sub', 'mul', 'neg', 'sigmoid', 'tanh', 'leaky_relu', 'layer_norm', 'softmax', 'softmax_cross_entropy',
           'reshape', 'concat', 'sum', 'mean', 'mix_nodes', 'backward', 'zero_grad', 'no_grad', 'numerical_gradient', 'gradient_check')


logger = log.get_logger(__name__)


class DimensionError(ContractError):
    """Operand shapes do not agree"""


class NonFiniteError(NumericalError):
    """A tensor would hold NaN or infinite values"""


class TapeError(ContractError):
    """Backward was requested on something the tape cannot differentiate"""


class LabelError(ContractError):
    """Class labels outside {0, 1}"""


_tensor_ids = count()
_state = local()


def _active_tape():
    return getattr(_state, 'tape', None)


class Tensor(object):
    """A dense float64 array with an optional gradient buffer"""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        data = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError('tensor %s would contain non-finite values' % (name or ''))
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(data) if self.requires_grad else None
        self.name = name
        self.id = next(_tensor_ids)
        self._tape = None

    def __repr__(self):
        return 'Tensor(%s%s, shape=%s%s)' % ('%s, ' % self.name if self.name else '', np.array2string(self.data, threshold=6), self.shape,
                                             ', requires_grad=True' if self.requires_grad else '')

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise DimensionError('only single element tensors can be converted to a number')
        return float(self.data.reshape(()))

    def zero_grad(self):
        if self.requires_grad:
            self.grad[...] = 0.0

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    # operators

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


class TapeEntry(object):
    __slots__ = 'op', 'inputs', 'output', 'backward'

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward

    def __repr__(self):
        return '%s(%s -> %d)' % (self.op, ', '.join(str(item.id) for item in self.inputs), self.output.id)


class Tape(object):
    """Ordered record of the differentiable operations of one forward pass"""

    def __init__(self):
        self.entries = []
        self.consumed = False
        self._previous = None

    def __enter__(self):
        self._previous = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        _state.tape = self._previous
        self._previous = None
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, op, inputs, output, backward):
        self.entries.append(TapeEntry(op, inputs, output, backward))
        output._tape = self

    def backward(self, loss):
        if loss._tape is not self:
            raise TapeError('loss was not recorded on this tape')
        if self.consumed:
            raise TapeError('the tape was already used for a backward pass; run a new forward pass')
        if loss.size != 1:
            raise ContractError('backward needs a scalar loss, got shape %s' % (loss.shape,))
        self.consumed = True
        loss.grad += 1.0
        for entry in reversed(self.entries):
            output_grad = entry.output.grad
            if not output_grad.any():
                continue
            input_grads = entry.backward(output_grad)
            for tensor, grad in zip(entry.inputs, input_grads):
                if grad is not None and tensor.requires_grad:
                    tensor.grad += grad
        logger.debug('backward pass over %d tape entries', len(self.entries))


@contextmanager
def no_grad():
    """Disable recording inside the block (evaluation)"""
    previous = _active_tape()
    _state.tape = None
    try:
        yield
    finally:
        _state.tape = previous


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op, inputs, data, backward):
    tape = _active_tape()
    tracked = tape is not None and any(item.requires_grad for item in inputs)
    output = Tensor(data, requires_grad=tracked)
    if tracked:
        tape.record(op, inputs, output, backward)
    return output


def _unbroadcast(grad, shape):
    """Sum out broadcast dimensions so the gradient matches the operand shape"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError('%s: shapes %s and %s do not broadcast' % (op, a.shape, b.shape))


# Elementwise arithmetic

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'add')

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)
    return _result('add', (a, b), a.data + b.data, backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'sub')

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)
    return _result('sub', (a, b), a.data - b.data, backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'mul')

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)
    return _result('mul', (a, b), a.data * b.data, backward)


def neg(a):
    return _result('neg', (a,), -a.data, lambda grad: (-grad,))


def matmul(a, b):
    """Product of an m×k and a k×n matrix"""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError('matmul needs two matrices, got shapes %s and %s' % (a.shape, b.shape))
    if a.shape[1] != b.shape[0]:
        raise DimensionError('matmul inner dimensions differ: %s and %s' % (a.shape, b.shape))

    def backward(grad):
        return grad @ b.data.T, a.data.T @ grad
    return _result('matmul', (a, b), a.data @ b.data, backward)


# Activations

def sigmoid(x):
    # split by sign so exp never overflows
    data = np.empty_like(x.data)
    positive = x.data >= 0
    data[positive] = 1.0 / (1.0 + np.exp(-x.data[positive]))
    exp_x = np.exp(x.data[~positive])
    data[~positive] = exp_x / (1.0 + exp_x)
    return _result('sigmoid', (x,), data, lambda grad: (grad * data * (1.0 - data),))


def tanh(x):
    data = np.tanh(x.data)
    return _result('tanh', (x,), data, lambda grad: (grad * (1.0 - data * data),))


def leaky_relu(x, slope=0.01):
    if not 0 < slope < 1:
        raise ContractError('leaky_relu slope must be in (0, 1), got %r' % slope)
    signs = getattr(_state, 'kink_signs', None)
    if signs is not None:
        signs.append(x.data >= 0)
    factor = np.where(x.data >= 0, 1.0, slope)
    return _result('leaky_relu', (x,), x.data * factor, lambda grad: (grad * factor,))


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale by gamma and shift by beta"""
    d = x.shape[-1]
    if d < 2:
        raise ContractError('layer_norm needs at least 2 features, got %d' % d)
    if eps <= 0:
        raise ContractError('layer_norm eps must be positive')
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError('layer_norm parameters must have shape (%d,)' % d)
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std

    def backward(grad):
        grad_normalized = grad * gamma.data
        grad_x = inv_std * (grad_normalized - grad_normalized.mean(axis=-1, keepdims=True) -
                            normalized * (grad_normalized * normalized).mean(axis=-1, keepdims=True))
        axes = tuple(range(grad.ndim - 1))
        return grad_x, (grad * normalized).sum(axis=axes), grad.sum(axis=axes)
    return _result('layer_norm', (x, gamma, beta), normalized * gamma.data + beta.data, backward)


def softmax(logits):
    """Row-wise softmax of a plain array (max subtracted)"""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp_shifted = np.exp(shifted)
    return exp_shifted / exp_shifted.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels; returns (loss, probs)"""
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise DimensionError('logits must have shape B×2, got %s' % (logits.shape,))
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise DimensionError('need one label per row of logits')
    if not np.all((labels == 0) | (labels == 1)):
        raise LabelError('labels must be 0 or 1')
    labels = labels.astype(np.int64)
    batch = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_normalizer = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_normalizer
    probs = np.exp(log_probs)
    loss = -log_probs[np.arange(batch), labels].mean()
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(batch), labels] = 1.0

    def backward(grad):
        return (grad * (probs - one_hot) / batch,)
    return _result('softmax_cross_entropy', (logits,), loss, backward), Tensor(probs)


# Shape manipulation and reductions

def reshape(x, shape):
    original = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError('cannot reshape %s into %s' % (original, shape))
    return _result('reshape', (x,), data, lambda grad: (grad.reshape(original),))


def _getitem(x, index):
    data = x.data[index]

    def backward(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, index, grad)
        return (full,)
    return _result('getitem', (x,), data, backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(item) for item in tensors]
    try:
        data = np.concatenate([item.data for item in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError('concat: %s' % e)
    boundaries = np.cumsum([item.shape[axis] for item in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, boundaries, axis=axis))
    return _result('concat', tuple(tensors), data, backward)


# noinspection PyShadowingBuiltins
def sum(x, axis=None):
    shape = x.shape

    def backward(grad):
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, shape).copy(),)
    return _result('sum', (x,), x.data.sum(axis=axis), backward)


def mean(x, axis=None):
    shape = x.shape
    n = x.size if axis is None else shape[axis]

    def backward(grad):
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad / n, shape).copy(),)
    return _result('mean', (x,), x.data.mean(axis=axis), backward)


def mix_nodes(adjacency, nodes):
    """
    Aggregate node features along weighted links: out[b, j] = sum_i A[i, j] nodes[b, i].

    `adjacency` is a constant C×C matrix (or B×C×C, one per sample) with A[i, j]
    the weight of the link i→j; `nodes` is a B×C×D tensor.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if nodes.ndim != 3:
        raise DimensionError('nodes must have shape B×C×D, got %s' % (nodes.shape,))
    c = nodes.shape[1]
    if adjacency.shape == (c, c):
        data = np.einsum('ij,bid->bjd', adjacency, nodes.data)

        def backward(grad):
            return (np.einsum('ij,bjd->bid', adjacency, grad),)
    elif adjacency.shape == (nodes.shape[0], c, c):
        data = np.einsum('bij,bid->bjd', adjacency, nodes.data)

        def backward(grad):
            return (np.einsum('bij,bjd->bid', adjacency, grad),)
    else:
        raise DimensionError('adjacency shape %s does not match %d nodes' % (adjacency.shape, c))
    return _result('mix_nodes', (nodes,), data, backward)


# Gradient bookkeeping

def backward(loss):
    """Populate the gradients of every tensor that contributed to the scalar loss"""
    if not isinstance(loss, Tensor):
        raise TapeError('backward needs a Tensor')
    if loss.size != 1:
        raise ContractError('backward needs a scalar loss, got shape %s' % (loss.shape,))
    if loss._tape is None:
        raise TapeError('loss was not recorded on a tape (compute it inside a Tape context from tensors that require gradients)')
    loss._tape.backward(loss)


def zero_grad(tensors):
    for tensor in tensors:
        tensor.zero_grad()


@contextmanager
def _recorded_kinks():
    """Collect the sign pattern of every leaky_relu input evaluated inside the block"""
    previous = getattr(_state, 'kink_signs', None)
    _state.kink_signs = signs = []
    try:
        yield signs
    finally:
        _state.kink_signs = previous


def _evaluate(function):
    with no_grad(), _recorded_kinks() as signs:
        value = float(function())
    return value, signs


def _same_signs(first, second):
    return len(first) == len(second) and all(np.array_equal(a, b) for a, b in zip(first, second))


def _central_difference(function, tensor, index, step):
    """(difference quotient, whether any leaky_relu input changed sign between the evaluation points)"""
    original = tensor.data[index]
    try:
        _, center = _evaluate(function)
        tensor.data[index] = original + step
        upper, upper_signs = _evaluate(function)
        tensor.data[index] = original - step
        lower, lower_signs = _evaluate(function)
    finally:
        tensor.data[index] = original
    crossed = not (_same_signs(center, upper_signs) and _same_signs(center, lower_signs))
    return (upper - lower) / (2.0 * step), crossed


def numerical_gradient(function, tensor, index, step=1e-3):
    """Central difference of the scalar function() with respect to tensor.data[index]"""
    return _central_difference(function, tensor, index, step)[0]


def gradient_check(function, tensors, samples=5, step=1e-3, rng=None, floor=1e-6):
    """
    Compare reverse mode gradients of function() (which must return a scalar
    Tensor) with central differences at `samples` random coordinates of every
    tensor. Returns the largest relative error found.

    A coordinate whose ±step evaluations put some leaky_relu input on the
    other side of zero is skipped (the difference quotient spans a
    kink there) and is replaced by the next random coordinate.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    zero_grad(tensors)
    with Tape():
        loss = function()
    backward(loss)
    analytic = [tensor.grad.copy() for tensor in tensors]
    worst = 0.0
    skipped = 0
    for tensor, grad in zip(tensors, analytic):
        checked = 0
        for flat_index in rng.permutation(tensor.size):
            if checked == samples:
                break
            index = np.unravel_index(flat_index, tensor.shape)
            numeric, crossed = _central_difference(lambda: function().item(), tensor, index, step)
            if crossed:
                skipped += 1
                continue
            checked += 1
            worst = max(worst, abs(grad[index] - numeric) / max(abs(grad[index]), abs(numeric), floor))
    if skipped:
        logger.debug('gradient check skipped %d coordinates next to a leaky ReLU kink', skipped)
    return worst
