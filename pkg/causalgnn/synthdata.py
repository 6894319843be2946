"""
Synthetic wildfire danger data from a structural causal model.

Oscillation indices follow a slow vector autoregression that updates every
`oci_cadence` fine steps and holds its value in between. Local weather
variables follow a fine-step autoregression driven by the indices and by each
other. Observations add a seasonal cycle. Fire labels are Bernoulli draws of
a logistic function of lagged drivers with optional pairwise synergy terms;
the bias is calibrated to a requested positive rate.
"""

import hashlib
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from causalgnn import log, seeding, system
from causalgnn.errors import ContractError, DataError
from causalgnn.models import Batch
from causalgnn.pcmci import KINDS, CausalGraph, InsufficientDataError, Link, TimeSeriesDataset


__all__ = ('StabilityError', 'CalibrationError', 'LabelRule', 'SCMSpec', 'SyntheticData', 'Windows', 'PRESETS', 'preset',
           'simulate', 'generate', 'label_fire', 'calibrate_bias', 'window_times', 'make_windows', 'save_dataset', 'load_dataset')


logger = log.get_logger(__name__)

BURN_IN = 200


class StabilityError(ContractError):
    """The autoregression of the model is not stable"""


class CalibrationError(DataError):
    """The requested positive rate cannot be realized"""


@dataclass(frozen=True)
class LabelRule(object):
    """
    Logit of the fire probability at time t: sum of weight × x_i(t - lag),
    plus strength × x_a(t - lag) × x_b(t - lag) for every synergy, plus bias.
    A bias of None is calibrated to positive_rate.
    """

    weights: tuple = ()
    synergies: tuple = ()
    positive_rate: float = 0.011
    bias: float = None

    @property
    def max_lag(self):
        return max([lag for _, lag, _ in self.weights] + [lag for _, _, lag, _ in self.synergies] + [0])

    def variables(self):
        return {name for name, _, _ in self.weights} | {name for a, b, _, _ in self.synergies for name in (a, b)}


@dataclass(frozen=True)
class SCMSpec(object):
    """
    Lags of index -> index coefficients count index updates; every other lag
    counts fine steps.
    """

    name: str
    variables: tuple
    kinds: tuple
    coefficients: tuple
    noise_std: tuple
    seasonal_amplitude: tuple
    seasonal_period: int = 12
    oci_cadence: int = 4
    label: LabelRule = field(default_factory=LabelRule)
    horizon: int = 1

    def __post_init__(self):
        count = len(self.variables)
        if len(set(self.variables)) != count:
            raise ContractError('variable names must be unique')
        if len(self.kinds) != count or len(self.noise_std) != count or len(self.seasonal_amplitude) != count:
            raise ContractError('kinds, noise_std and seasonal_amplitude need one entry per variable')
        if any(kind not in KINDS for kind in self.kinds) or self.kinds.count('target') != 1:
            raise ContractError('kinds must be target, local or oci with exactly one target')
        if any(std < 0 for std in self.noise_std):
            raise ContractError('noise standard deviations must not be negative')
        if self.seasonal_period < 1 or self.oci_cadence < 1 or self.horizon < 1:
            raise ContractError('seasonal_period, oci_cadence and horizon must be positive')
        for source, lag, target, _ in self.coefficients:
            source_kind, target_kind = self.kind_of(source), self.kind_of(target)
            if 'target' in (source_kind, target_kind):
                raise ContractError('the target variable takes no part in the autoregression')
            if lag < 1:
                raise ContractError('coefficient %s -> %s needs a lag of at least 1' % (source, target))
            if target_kind == 'oci' and source_kind != 'oci':
                raise ContractError('oscillation index %s can only be driven by indices' % target)
        for name in self.label.variables():
            if self.kind_of(name) == 'target':
                raise ContractError('the label rule cannot depend on the target')
        lags = [lag for _, lag, _ in self.label.weights] + [lag for _, _, lag, _ in self.label.synergies]
        if any(lag < self.horizon for lag in lags):
            raise ContractError('label terms need a lag of at least the horizon (%d)' % self.horizon)
        if not 0 < self.label.positive_rate < 1:
            raise ContractError('positive_rate must be in (0, 1)')

    def index(self, name):
        try:
            return self.variables.index(name)
        except ValueError:
            raise ContractError('unknown variable %r' % name) from None

    def kind_of(self, name):
        return self.kinds[self.index(name)]

    @property
    def target_index(self):
        return self.kinds.index('target')

    def fine_lag(self, source, lag, target):
        """Coefficient lag in fine steps"""
        return lag * self.oci_cadence if self.kind_of(target) == 'oci' else lag

    @property
    def tau_max(self):
        lags = [self.fine_lag(source, lag, target) for source, lag, target, _ in self.coefficients]
        return max(lags + [self.label.max_lag, 1])

    def _block_radius(self, kind):
        members = [index for index, value in enumerate(self.kinds) if value == kind]
        terms = [(self.index(source), lag, self.index(target), weight) for source, lag, target, weight in self.coefficients
                 if self.kind_of(target) == kind and self.kind_of(source) == kind]
        if not members or not terms:
            return 0.0
        position = {index: offset for offset, index in enumerate(members)}
        order = max(lag for _, lag, _, _ in terms)
        size = len(members)
        companion = np.zeros((size * order, size * order))
        for source, lag, target, weight in terms:
            companion[position[target], (lag - 1) * size + position[source]] += weight
        companion[size:, :-size] = np.eye(size * (order - 1))
        return float(np.max(np.abs(np.linalg.eigvals(companion))))

    def spectral_radius(self):
        """Largest companion-matrix eigenvalue modulus; indices and local weather form triangular blocks"""
        return max(self._block_radius('oci'), self._block_radius('local'))

    def check_stability(self):
        radius = self.spectral_radius()
        if radius >= 1.0:
            raise StabilityError('the %s model is unstable (spectral radius %.4f)' % (self.name, radius))
        return radius

    def ground_truth(self):
        """The generating graph in fine steps; coefficients enter as link strengths clipped to [-1, 1]"""
        links = {}
        for source, lag, target, weight in self.coefficients:
            key = (self.index(source), self.fine_lag(source, lag, target), self.index(target))
            links[key] = Link(*key, mci=float(np.clip(weight, -1.0, 1.0)), pvalue=0.0)
        for name, lag, weight in self.label.weights:
            if weight:
                key = (self.index(name), lag, self.target_index)
                links[key] = Link(*key, mci=float(np.clip(weight, -1.0, 1.0)), pvalue=0.0)
        return CausalGraph(self.variables, self.kinds, self.tau_max, 0.05, links.values())

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        data = dict(data)
        label = data.pop('label', {})
        label = LabelRule(weights=tuple(tuple(item) for item in label.get('weights', ())),
                          synergies=tuple(tuple(item) for item in label.get('synergies', ())),
                          positive_rate=label.get('positive_rate', 0.011), bias=label.get('bias'))
        for key in ('variables', 'kinds', 'noise_std', 'seasonal_amplitude'):
            data[key] = tuple(data[key])
        data['coefficients'] = tuple(tuple(item) for item in data['coefficients'])
        return cls(label=label, **data)

    def spec_hash(self):
        return hashlib.sha256(system.dump_json(self.to_json()).encode('utf-8')).hexdigest()

    def with_label(self, **changes):
        label = LabelRule(**dict(asdict(self.label), **changes))
        return SCMSpec(**dict(asdict(self), label=label))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _logits(drivers, rule, names, start):
    """Label logits (without bias) for rows start..end of a driver matrix"""
    rows = drivers.shape[0] - start
    eta = np.zeros(rows)
    for name, lag, weight in rule.weights:
        column = names.index(name)
        eta += weight * drivers[start - lag:start - lag + rows, column]
    for name_a, name_b, lag, strength in rule.synergies:
        a, b = names.index(name_a), names.index(name_b)
        eta += strength * drivers[start - lag:start - lag + rows, a] * drivers[start - lag:start - lag + rows, b]
    return eta


def calibrate_bias(eta, uniforms, positive_rate, tolerance=0.1):
    """
    Bisection for the bias that makes (uniforms < sigmoid(eta + bias)) hit the
    requested positive count; the uniforms are drawn once so the count is
    monotone in the bias.
    """
    size = eta.size
    expected = positive_rate * size
    wanted = int(round(expected))
    if wanted < 1:
        raise CalibrationError('a positive rate of %g is unreachable with %d samples' % (positive_rate, size))

    def positives(bias):
        return int(np.count_nonzero(uniforms < _sigmoid(eta + bias)))
    low, high = -60.0 - float(eta.max()), 60.0 - float(eta.min())
    if positives(high) < wanted or positives(low) > wanted:
        raise CalibrationError('no bias realizes %d positives out of %d' % (wanted, size))
    for _ in range(200):
        middle = 0.5 * (low + high)
        if positives(middle) >= wanted:
            high = middle
        else:
            low = middle
    realized = positives(high)
    if abs(realized - expected) > tolerance * expected:
        raise CalibrationError('realized %d positives, requested %.1f (rate %g)' % (realized, expected, positive_rate))
    return high


def label_fire(dataset, rule, rng):
    """
    Bernoulli fire labels for the rows of dataset. Rows before the longest
    lag of the rule have no drivers and are labelled 0. Returns (labels, bias).
    """
    names = list(dataset.names)
    missing = rule.variables().difference(names)
    if missing:
        raise ContractError('label rule refers to unknown variables: %s' % ', '.join(sorted(missing)))
    start = rule.max_lag
    if start >= dataset.T:
        raise InsufficientDataError('the dataset is shorter than the label lags')
    eta = _logits(dataset.values, rule, names, start)
    uniforms = rng.random(eta.size)
    bias = rule.bias if rule.bias is not None else calibrate_bias(eta, uniforms, rule.positive_rate)
    labels = np.zeros(dataset.T, dtype=np.int64)
    labels[start:] = uniforms < _sigmoid(eta + bias)
    return labels, bias


@dataclass
class SyntheticData(object):
    spec: SCMSpec
    dataset: TimeSeriesDataset
    truth: CausalGraph
    bias: float
    seed: int
    burn_in: int = BURN_IN

    @property
    def labels(self):
        return self.dataset.values[:, self.dataset.target_index].astype(np.int64)

    @property
    def positive_rate(self):
        return float(self.labels.mean())

    def sidecar(self):
        return {'variables': list(self.dataset.names),
                'kinds': list(self.dataset.kinds),
                'preset': self.spec.name,
                'cadence': self.spec.oci_cadence,
                'seasonal_period': self.spec.seasonal_period,
                'spec': self.spec.to_json(),
                'spec_hash': self.spec.spec_hash(),
                'ground_truth': self.truth.to_json(),
                'positive_rate': self.positive_rate,
                'bias': self.bias,
                'seed': self.seed,
                'T': self.dataset.T,
                'burn_in': self.burn_in}


def simulate(spec, innovations, burn_in=BURN_IN):
    """
    Observed driver values (state plus seasonal cycle, target column zero)
    for standard normal innovations of shape (tau_max + burn_in + T)×C.
    Row t depends on the innovations of rows up to t only.
    """
    count = len(spec.variables)
    pad = spec.tau_max
    innovations = np.asarray(innovations, dtype=np.float64)
    if innovations.ndim != 2 or innovations.shape[1] != count or innovations.shape[0] <= pad + burn_in:
        raise ContractError('innovations must be a (%d + %d + T)×%d matrix' % (pad, burn_in, count))
    total = innovations.shape[0]
    target = spec.target_index
    oci = np.array([kind == 'oci' for kind in spec.kinds])

    fine_terms, coarse_terms = {}, {}
    for source, lag, destination, weight in spec.coefficients:
        terms = coarse_terms if spec.kind_of(destination) == 'oci' else fine_terms
        fine = spec.fine_lag(source, lag, destination)
        matrix = terms.setdefault(fine, np.zeros((count, count)))
        matrix[spec.index(destination), spec.index(source)] += weight
    fine_terms, coarse_terms = sorted(fine_terms.items()), sorted(coarse_terms.items())

    noise = innovations * np.asarray(spec.noise_std)
    noise[:, target] = 0.0
    state = np.zeros((total, count))
    for t in range(pad, total):
        value = noise[t].copy()
        for lag, matrix in fine_terms:
            value += matrix @ state[t - lag]
        if (t - pad) % spec.oci_cadence == 0:
            for lag, matrix in coarse_terms:
                value += matrix @ state[t - lag]
        else:
            value[oci] = state[t - 1, oci]
        state[t] = value

    phase = np.arange(total) - pad - burn_in
    seasonal = np.sin(2.0 * np.pi * phase / spec.seasonal_period)[:, None] * np.asarray(spec.seasonal_amplitude)[None, :]
    observed = state + seasonal
    observed[:, target] = 0.0
    return observed


def generate(spec, T, seed=0, burn_in=BURN_IN):
    """Simulate T observed steps after burn_in discarded steps; process and label noise come from separate streams of seed"""
    if T < 10 * spec.tau_max:
        raise ContractError('T=%d is too short for lags up to %d (need %d)' % (T, spec.tau_max, 10 * spec.tau_max))
    spec.check_stability()
    target = spec.target_index
    start = spec.tau_max + burn_in
    innovations = seeding.stream(seed, 'process').standard_normal((start + T, len(spec.variables)))
    observed = simulate(spec, innovations, burn_in)

    names = list(spec.variables)
    eta = _logits(observed, spec.label, names, start)
    uniforms = seeding.stream(seed, 'labels').random(T)
    bias = spec.label.bias if spec.label.bias is not None else calibrate_bias(eta, uniforms, spec.label.positive_rate)
    values = observed[start:].copy()
    values[:, target] = (uniforms < _sigmoid(eta + bias)).astype(np.float64)
    dataset = TimeSeriesDataset(values, spec.variables, spec.kinds)
    logger.info('generated %d steps of %s (seed %d): positive rate %.5f, bias %.4f', T, spec.name, seed, values[:, target].mean(), bias)
    return SyntheticData(spec, dataset, spec.ground_truth(), float(bias), seed, burn_in)


def _reference_scm(name, oci_cadence, seasonal_period, label, local_amplitude, oci_amplitude):
    variables = ('fire', 't2m', 'tp', 'vpd', 'nao', 'ao', 'nina34')
    kinds = ('target', 'local', 'local', 'local', 'oci', 'oci', 'oci')
    coefficients = (('nao', 1, 'nao', 0.6), ('ao', 1, 'ao', 0.5), ('nina34', 1, 'nina34', 0.8), ('nao', 1, 'ao', 0.3),
                    ('t2m', 1, 't2m', 0.5), ('tp', 1, 'tp', 0.3), ('vpd', 1, 'vpd', 0.4),
                    ('nina34', 2, 't2m', 0.4), ('nao', 1, 'tp', 0.4), ('ao', 3, 'vpd', 0.35), ('t2m', 1, 'vpd', 0.4))
    amplitude = (0.0,) + (local_amplitude,) * 3 + (oci_amplitude,) * 3
    return SCMSpec(name, variables, kinds, coefficients, (0.0,) + (1.0,) * 6, amplitude, seasonal_period, oci_cadence, label)


PRESETS = {
    # one step per month, indices update every step: the generating graph is exactly what discovery can see
    'fig6-default': lambda: _reference_scm('fig6-default', 1, 12,
                                       LabelRule(weights=(('t2m', 1, 1.0), ('vpd', 1, 1.0), ('tp', 1, -0.8)), positive_rate=0.1),
                                       local_amplitude=1.0, oci_amplitude=0.5),
    # four steps per month, indices update monthly, a hot-dry synergy and a slow teleconnection
    'mediterranean': lambda: _reference_scm('mediterranean', 4, 48,
                                        LabelRule(weights=(('t2m', 1, 1.2), ('vpd', 1, 1.0), ('tp', 2, -0.8), ('nina34', 24, 0.8)),
                                                  synergies=(('t2m', 'vpd', 1, 0.6),), positive_rate=0.011),
                                        local_amplitude=1.5, oci_amplitude=0.5),
    'boreal': lambda: _reference_scm('boreal', 4, 48,
                                 LabelRule(weights=(('t2m', 1, 1.5), ('vpd', 1, 1.2), ('tp', 1, -1.0), ('ao', 12, 0.8)),
                                           synergies=(('t2m', 'vpd', 1, 0.8),), positive_rate=0.000737),
                                 local_amplitude=2.0, oci_amplitude=0.5),
}


def preset(name):
    try:
        return PRESETS[name.replace('_', '-')]()
    except KeyError:
        raise ContractError('unknown preset %r (expected one of %s)' % (name, ', '.join(sorted(PRESETS)))) from None


def window_times(T, local_window, oci_window, horizon, stride=4):
    """Input end times t of every complete window whose label t + horizon exists"""
    if horizon < 1:
        raise ContractError('the horizon must be at least one step')
    if local_window < 1 or oci_window < 1 or stride < 1:
        raise ContractError('window lengths and stride must be positive')
    span = max(local_window, stride * oci_window)
    if T - span - horizon + 1 < 1:
        raise InsufficientDataError('%d steps cannot hold a %d step window and a %d step horizon' % (T, span, horizon))
    return np.arange(span - 1, T - horizon)


@dataclass
class Windows(object):
    train: Batch
    validation: Batch
    test: Batch
    local_names: tuple
    oci_names: tuple
    times: dict
    boundaries: tuple
    span: int
    window_count: int
    mean: np.ndarray
    std: np.ndarray

    @property
    def splits(self):
        return {'train': self.train, 'validation': self.validation, 'test': self.test}


def make_windows(dataset, local_window, oci_window, horizon, stride=4, fractions=(0.7, 0.15, 0.15)):
    """
    Sliding windows ending at t with the label at t + horizon. Local windows
    hold the last local_window fine steps; index windows hold oci_window
    means of stride steps each. The series is split chronologically and a
    window is kept only if its inputs and label lie inside one split. Inputs
    are standardized with the mean and deviation of the training rows.
    """
    times = window_times(dataset.T, local_window, oci_window, horizon, stride)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError('split fractions must be three positive numbers adding up to 1')
    span = max(local_window, stride * oci_window)
    first = int(round(fractions[0] * dataset.T))
    second = int(round((fractions[0] + fractions[1]) * dataset.T))
    local = dataset.indices('local')
    oci = dataset.indices('oci')
    labels = dataset.values[:, dataset.target_index]
    inputs = dataset.values[:, local + oci]
    mean = inputs[:first].mean(axis=0)
    std = inputs[:first].std(axis=0)
    std[std == 0] = 1.0
    inputs = (inputs - mean) / std
    local_values, oci_values = inputs[:, :len(local)], inputs[:, len(local):]

    def windows(ends):
        x_local = np.stack([local_values[t - local_window + 1:t + 1].T for t in ends])
        x_oci = np.stack([oci_values[t - stride * oci_window + 1:t + 1].reshape(oci_window, stride, len(oci)).mean(axis=1).T for t in ends])
        return Batch(x_local, x_oci, labels[ends + horizon].astype(np.int64), horizon)

    batches, split_times = [], {}
    for name, low, high in (('train', 0, first), ('validation', first, second), ('test', second, dataset.T)):
        selected = times[(times - span + 1 >= low) & (times + horizon < high)]
        if selected.size == 0:
            raise InsufficientDataError('the %s split holds no complete window' % name)
        split_times[name] = selected
        batches.append(windows(selected))
    logger.debug('made %d windows (%d kept after split boundaries)', times.size, sum(item.size for item in split_times.values()))
    return Windows(*batches, tuple(dataset.names[index] for index in local), tuple(dataset.names[index] for index in oci), split_times,
                   (first, second), span, int(times.size), mean, std)


def save_dataset(path, data):
    """Write the wide CSV (one row per fine step) and its JSON sidecar next to it"""
    system.makedirs(os.path.dirname(os.path.abspath(path)))
    system.write_csv(path, list(data.dataset.names), ([float(value) for value in row] for row in data.dataset.values))
    system.write_json(os.path.splitext(path)[0] + '.json', data.sidecar())


def load_dataset(path):
    """Return (TimeSeriesDataset, sidecar)"""
    sidecar_path = os.path.splitext(path)[0] + '.json'
    try:
        sidecar = system.read_json(sidecar_path)
        header, rows = system.read_csv(path)
    except (OSError, ValueError) as e:
        raise DataError('cannot read dataset %s: %s' % (path, e)) from None
    if header != sidecar.get('variables', header):
        raise DataError('dataset columns do not match the sidecar variables')
    try:
        values = np.array([[float(value) for value in row] for row in rows])
    except ValueError as e:
        raise DataError('malformed dataset %s: %s' % (path, e)) from None
    return TimeSeriesDataset(values, header, sidecar['kinds']), sidecar
