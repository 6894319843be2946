"""
Neural networks of the wildfire danger forecaster.

Every input variable is a scalar sequence encoded by one shared recurrent
encoder. The graph models treat the encodings as node features, update them
with two graph convolution layers and average them; the recurrent baselines
average the encodings directly. A linear layer maps the pooled features to
the no fire / fire logits.
"""

import os
from dataclasses import asdict, dataclass

import numpy as np

from causalgnn import log, system, tensor
from causalgnn.errors import ContractError, DataError
from causalgnn.graph import AdjacencyMatrix, corr_adjacency, normalize_adjacency
from causalgnn.tensor import Tensor


__all__ = ('MODEL_KINDS', 'GRAPH_KINDS', 'ModelConfig', 'ModelParams', 'Batch', 'Model', 'param_shapes',
           'lstm_encode', 'gru_encode', 'encode_nodes', 'gcn_layer', 'forward', 'forward_rnn_baseline')


logger = log.get_logger(__name__)

MODEL_KINDS = ('lstm', 'gru', 'gnn_corr', 'gnn_full', 'gnn_causal')
GRAPH_KINDS = {'gnn_corr': 'corr', 'gnn_full': 'full', 'gnn_causal': 'causal'}


@dataclass(frozen=True)
class ModelConfig(object):
    local_count: int
    oci_count: int
    local_window: int = 39
    oci_window: int = 10
    horizon: int = 1
    hidden_dim: int = 32
    gnn_hidden: int = 64
    leaky_slope: float = 0.01
    num_classes: int = 2

    def __post_init__(self):
        if self.hidden_dim < 1 or self.gnn_hidden < 1:
            raise ContractError('hidden dimensions must be positive')
        if self.local_window < 1 or self.oci_window < 1:
            raise ContractError('lag windows must be at least one step long')
        if self.horizon < 1:
            raise ContractError('the forecast horizon must be at least one step')
        if self.local_count < 0 or self.oci_count < 0 or self.local_count + self.oci_count < 1:
            raise ContractError('a model needs at least one input variable')
        if not 0 < self.leaky_slope < 1:
            raise ContractError('leaky_slope must be in (0, 1)')
        if self.num_classes != 2:
            raise ContractError('only binary classification is supported')

    @property
    def node_count(self):
        return self.local_count + self.oci_count


def param_shapes(kind, config):
    """Ordered (name, shape, role) of the parameters of a model kind; role is weight, bias or gain"""
    if kind not in MODEL_KINDS:
        raise ContractError('unknown model kind %r' % kind)
    hidden, graph_hidden = config.hidden_dim, config.gnn_hidden
    if kind == 'gru':
        shapes = [('gru.W_x', (1, 3 * hidden), 'weight'),
                  ('gru.U_zr', (hidden, 2 * hidden), 'weight'),
                  ('gru.U_n', (hidden, hidden), 'weight'),
                  ('gru.b', (3 * hidden,), 'bias')]
    else:
        shapes = [('lstm.W_x', (1, 4 * hidden), 'weight'),
                  ('lstm.U', (hidden, 4 * hidden), 'weight'),
                  ('lstm.b', (4 * hidden,), 'bias')]
    if kind in GRAPH_KINDS:
        if min(hidden, graph_hidden) < 2:
            raise ContractError('%s needs hidden_dim and gnn_hidden of at least 2 for layer normalization' % kind)
        shapes += [('gcn1.kernel', (hidden, graph_hidden), 'weight'),
                   ('gcn1.gamma', (graph_hidden,), 'gain'),
                   ('gcn1.beta', (graph_hidden,), 'bias'),
                   ('gcn2.kernel', (graph_hidden, hidden), 'weight'),
                   ('gcn2.gamma', (hidden,), 'gain'),
                   ('gcn2.beta', (hidden,), 'bias')]
    shapes += [('classifier.W', (hidden, config.num_classes), 'weight'),
               ('classifier.b', (config.num_classes,), 'bias')]
    return shapes


class ModelParams(object):
    """Named parameter tensors in a fixed order"""

    def __init__(self, tensors=()):
        self._tensors = dict(tensors)

    def __getitem__(self, name):
        return self._tensors[name]

    def __setitem__(self, name, value):
        self._tensors[name] = value

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return list(self._tensors.values())

    def zero_grad(self):
        tensor.zero_grad(self._tensors.values())

    def all_finite(self):
        return all(np.isfinite(item.data).all() for item in self._tensors.values())

    def copy(self):
        return ModelParams((name, Tensor(item.data, requires_grad=item.requires_grad, name=name)) for name, item in self._tensors.items())

    def assign(self, other):
        """Copy the values of other into these tensors in place"""
        if list(other) != list(self):
            raise ContractError('parameter sets differ')
        for name, item in self._tensors.items():
            item.data[...] = other[name].data

    def flatten(self):
        return np.concatenate([item.data.ravel() for item in self._tensors.values()]) if self._tensors else np.empty(0)

    def save(self, prefix, **metadata):
        """Write <prefix>.bin (little endian float64 values in parameter order) and the <prefix>.json manifest"""
        system.makedirs(os.path.dirname(os.path.abspath(prefix)))
        with open(prefix + '.bin', 'wb') as f:
            f.write(self.flatten().astype('<f8').tobytes())
        manifest = dict(metadata)
        manifest['parameters'] = [{'name': name, 'shape': list(item.shape)} for name, item in self._tensors.items()]
        manifest['digest'] = system.file_digest(prefix + '.bin')
        system.write_json(prefix + '.json', manifest)

    @classmethod
    def load(cls, prefix):
        """Return (params, manifest)"""
        manifest = system.read_json(prefix + '.json')
        values = np.fromfile(prefix + '.bin', dtype='<f8')
        params, offset = cls(), 0
        for entry in manifest['parameters']:
            shape = tuple(entry['shape'])
            count = int(np.prod(shape, dtype=np.int64))
            if offset + count > values.size:
                raise DataError('checkpoint %s is truncated' % prefix)
            params[entry['name']] = Tensor(values[offset:offset + count].reshape(shape), requires_grad=True, name=entry['name'])
            offset += count
        if offset != values.size:
            raise DataError('checkpoint %s has %d unexpected trailing values' % (prefix, values.size - offset))
        return params, manifest


@dataclass(frozen=True)
class Batch(object):
    """
    Input windows (local B×C_l×L_l, oscillation index B×C_oci×L_oci, oldest
    step first) and the labels at the forecast horizon.
    """

    x_local: np.ndarray
    x_oci: np.ndarray
    y: np.ndarray
    horizon: int = 1

    def __post_init__(self):
        if self.x_local.ndim != 3 or self.x_oci.ndim != 3:
            raise ContractError('batch windows must be B×C×L arrays')
        size = self.y.shape[0]
        if size < 1 or self.x_local.shape[0] != size or self.x_oci.shape[0] != size or self.y.ndim != 1:
            raise ContractError('batch windows and labels disagree on the batch size')
        if not np.all((self.y == 0) | (self.y == 1)):
            raise tensor.LabelError('batch labels must be 0 or 1')
        if self.horizon < 1:
            raise ContractError('the forecast horizon must be at least one step')

    def __len__(self):
        return self.y.shape[0]

    @property
    def positives(self):
        return int(self.y.sum())

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Batch(self.x_local[indices], self.x_oci[indices], self.y[indices], self.horizon)

    def flat_inputs(self):
        """B×D matrix of all input coordinates, local windows first"""
        size = len(self)
        return np.concatenate([self.x_local.reshape(size, -1), self.x_oci.reshape(size, -1)], axis=1)

    def with_flat_inputs(self, inputs):
        """A batch with the same layout whose inputs are the rows of an N×D matrix"""
        inputs = np.asarray(inputs, dtype=np.float64)
        local_size = self.x_local.shape[1] * self.x_local.shape[2]
        count = inputs.shape[0]
        x_local = inputs[:, :local_size].reshape((count,) + self.x_local.shape[1:])
        x_oci = inputs[:, local_size:].reshape((count,) + self.x_oci.shape[1:])
        return Batch(x_local, x_oci, np.zeros(count, dtype=np.int64), self.horizon)


def _check_series(series):
    series = series if isinstance(series, Tensor) else Tensor(series)
    if series.ndim != 2:
        raise tensor.DimensionError('an encoder needs a B×L series, got shape %s' % (series.shape,))
    if series.shape[1] < 1:
        raise ContractError('cannot encode an empty series')
    return series


def lstm_encode(series, params):
    """Final hidden state of a single layer LSTM run over every row of a B×L series (gate order i, f, g, o)"""
    series = _check_series(series)
    W_x, U, b = params['lstm.W_x'], params['lstm.U'], params['lstm.b']
    hidden = U.shape[0]
    rows = series.shape[0]
    h = Tensor(np.zeros((rows, hidden)))
    c = Tensor(np.zeros((rows, hidden)))
    for step in range(series.shape[1]):
        gates = series[:, step:step + 1] @ W_x + h @ U + b
        i = tensor.sigmoid(gates[:, :hidden])
        f = tensor.sigmoid(gates[:, hidden:2 * hidden])
        g = tensor.tanh(gates[:, 2 * hidden:3 * hidden])
        o = tensor.sigmoid(gates[:, 3 * hidden:])
        c = f * c + i * g
        h = o * tensor.tanh(c)
    return h


def gru_encode(series, params):
    """
    Final hidden state of a GRU: z and r gates, candidate n computed from the
    reset hidden state, h = (1 - z) h + z n.
    """
    series = _check_series(series)
    W_x, U_zr, U_n, b = params['gru.W_x'], params['gru.U_zr'], params['gru.U_n'], params['gru.b']
    hidden = U_n.shape[0]
    rows = series.shape[0]
    W_zr, W_n = W_x[:, :2 * hidden], W_x[:, 2 * hidden:]
    b_zr, b_n = b[:2 * hidden], b[2 * hidden:]
    h = Tensor(np.zeros((rows, hidden)))
    for step in range(series.shape[1]):
        x = series[:, step:step + 1]
        gates = x @ W_zr + h @ U_zr + b_zr
        z = tensor.sigmoid(gates[:, :hidden])
        r = tensor.sigmoid(gates[:, hidden:])
        n = tensor.tanh(x @ W_n + (r * h) @ U_n + b_n)
        h = (1.0 - z) * h + z * n
    return h


ENCODERS = {'lstm': lstm_encode, 'gru': gru_encode}


def encode_nodes(batch, params, encoder='lstm'):
    """B×C×hidden node features: locals then oscillation indices, each rolled over its own window"""
    encode = ENCODERS[encoder]
    size = len(batch)
    parts = []
    for windows in (batch.x_local, batch.x_oci):
        count, length = windows.shape[1], windows.shape[2]
        if count:
            encoded = encode(Tensor(windows.reshape(size * count, length)), params)
            parts.append(encoded.reshape(size, count, encoded.shape[1]))
    return parts[0] if len(parts) == 1 else tensor.concat(parts, axis=1)


def gcn_layer(nodes, adjacency, kernel, gamma, beta, slope=0.01):
    """LeakyReLU(LayerNorm(mix(A, H) W)) for C×D or B×C×D node features"""
    if not adjacency.normalized:
        raise ContractError('graph convolution needs a normalized adjacency matrix')
    single = nodes.ndim == 2
    if single:
        nodes = nodes.reshape(1, nodes.shape[0], nodes.shape[1])
    size, count, features = nodes.shape
    if kernel.shape[0] != features:
        raise tensor.DimensionError('kernel expects %d input features, nodes have %d' % (kernel.shape[0], features))
    mixed = tensor.mix_nodes(adjacency.weights, nodes)
    projected = (mixed.reshape(size * count, features) @ kernel).reshape(size, count, kernel.shape[1])
    output = tensor.leaky_relu(tensor.layer_norm(projected, gamma, beta), slope)
    return output.reshape(count, kernel.shape[1]) if single else output


def _classify(pooled, params):
    return pooled @ params['classifier.W'] + params['classifier.b']


def _check_batch(batch, config):
    if batch.x_local.shape[1] != config.local_count or batch.x_oci.shape[1] != config.oci_count:
        raise ContractError('batch has %d local and %d index variables, model expects %d and %d' %
                            (batch.x_local.shape[1], batch.x_oci.shape[1], config.local_count, config.oci_count))


def _confidence(logits):
    return Tensor(tensor.softmax(logits.data)[:, 1])


def forward(batch, adjacency, params, config):
    """
    Graph model forward pass. `adjacency` is a static AdjacencyMatrix over
    the C_l + C_oci nodes or the string 'corr' for a correlation graph
    recomputed from the node features of every sample. Returns
    (logits B×2, positive class confidence B).
    """
    _check_batch(batch, config)
    nodes = encode_nodes(batch, params, 'lstm')
    if isinstance(adjacency, str):
        if adjacency != 'corr':
            raise ContractError('unknown adjacency source %r' % adjacency)
        adjacency = normalize_adjacency(corr_adjacency(nodes.data))
    elif isinstance(adjacency, AdjacencyMatrix):
        if adjacency.size != config.node_count:
            raise ContractError('adjacency has %d nodes, model has %d variables' % (adjacency.size, config.node_count))
        if not adjacency.normalized:
            adjacency = normalize_adjacency(adjacency)
    else:
        raise ContractError('adjacency must be an AdjacencyMatrix or "corr"')
    hidden = gcn_layer(nodes, adjacency, params['gcn1.kernel'], params['gcn1.gamma'], params['gcn1.beta'], config.leaky_slope)
    hidden = gcn_layer(hidden, adjacency, params['gcn2.kernel'], params['gcn2.gamma'], params['gcn2.beta'], config.leaky_slope)
    logits = _classify(hidden.mean(axis=1), params)
    return logits, _confidence(logits)


def forward_rnn_baseline(batch, params, config, kind='lstm'):
    """Recurrent baseline: mean of the per-variable encodings fed to the classifier; returns logits B×2"""
    if kind not in ENCODERS:
        raise ContractError('baseline kind must be lstm or gru, got %r' % kind)
    _check_batch(batch, config)
    nodes = encode_nodes(batch, params, kind)
    return _classify(nodes.mean(axis=1), params)


class Model(object):
    """A model kind bound to its parameters and, for the causal and full variants, a static graph"""

    def __init__(self, kind, config, params, adjacency=None):
        if kind not in MODEL_KINDS:
            raise ContractError('unknown model kind %r' % kind)
        missing = [name for name, _, _ in param_shapes(kind, config) if name not in params]
        if missing:
            raise ContractError('parameters missing for %s: %s' % (kind, ', '.join(missing)))
        if kind in ('gnn_causal', 'gnn_full'):
            if not isinstance(adjacency, AdjacencyMatrix):
                raise ContractError('%s needs an adjacency matrix' % kind)
            if adjacency.kind != GRAPH_KINDS[kind]:
                raise ContractError('%s needs a %s adjacency, got %s' % (kind, GRAPH_KINDS[kind], adjacency.kind))
        self.kind = kind
        self.config = config
        self.params = params
        self.adjacency = adjacency
        self._graph = adjacency if kind != 'gnn_corr' else 'corr'
        if isinstance(self._graph, AdjacencyMatrix) and not self._graph.normalized:
            self._graph = normalize_adjacency(self._graph)

    def __repr__(self):
        return '%s(%r, nodes=%d, hidden=%d)' % (self.__class__.__name__, self.kind, self.config.node_count, self.config.hidden_dim)

    def logits(self, batch):
        if self.kind in GRAPH_KINDS:
            return forward(batch, self._graph, self.params, self.config)[0]
        return forward_rnn_baseline(batch, self.params, self.config, self.kind)

    def loss(self, batch):
        """(mean cross entropy, class probabilities)"""
        return tensor.softmax_cross_entropy(self.logits(batch), batch.y)

    def confidence(self, batch, chunk_size=1024):
        """Positive class confidence for every sample, evaluated without recording"""
        scores = []
        with tensor.no_grad():
            for start in range(0, len(batch), chunk_size):
                chunk = batch.subset(np.arange(start, min(start + chunk_size, len(batch))))
                scores.append(tensor.softmax(self.logits(chunk).data)[:, 1])
        return np.concatenate(scores)

    def save(self, prefix, **metadata):
        adjacency = None
        if self.adjacency is not None:
            adjacency = {'kind': self.adjacency.kind, 'variables': list(self.adjacency.variables), 'weights': self.adjacency.weights.tolist()}
        self.params.save(prefix, kind=self.kind, config=asdict(self.config), adjacency=adjacency, **metadata)

    @classmethod
    def load(cls, prefix):
        """Return (model, manifest)"""
        params, manifest = ModelParams.load(prefix)
        try:
            config = ModelConfig(**manifest['config'])
            adjacency = manifest.get('adjacency')
            if adjacency is not None:
                adjacency = AdjacencyMatrix(adjacency['weights'], adjacency['variables'], adjacency['kind'])
            return cls(manifest['kind'], config, params, adjacency), manifest
        except (KeyError, TypeError) as e:
            raise DataError('malformed checkpoint manifest %s.json: %s' % (prefix, e)) from None
