"""Model training: class resampling, Xavier initialization, Adam with decoupled weight decay and model selection"""

from dataclasses import dataclass, field

import numpy as np

from causalgnn import log, seeding, tensor
from causalgnn.errors import ContractError, DataError, NumericalError
from causalgnn.metrics import UndefinedMetricError, auprc
from causalgnn.models import GRAPH_KINDS, Model, ModelParams, param_shapes
from causalgnn.notification import NotificationCenter, NotificationData
from causalgnn.python.threadpool import run_jobs
from causalgnn.tensor import Tape, Tensor


__all__ = ('TrainConfig', 'TrainResult', 'ResampleError', 'TrainingDivergedError', 'resample', 'xavier_init',
           'init_params', 'Adam', 'Trainer', 'train', 'train_seeds')


logger = log.get_logger(__name__)


class ResampleError(DataError):
    """The requested class ratio cannot be met (no positive samples)"""


class TrainingDivergedError(NumericalError):
    """The loss or a parameter became non-finite"""


@dataclass(frozen=True)
class TrainConfig(object):
    lr: float = 1e-5
    weight_decay: float = 5e-6
    neg_pos_ratio: int = 5
    epochs: int = 100
    batch_size: int = 64
    seeds: tuple = (0, 1, 2)
    refresh_resample: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    jobs: int = 1

    def __post_init__(self):
        if self.lr < 0:
            raise ContractError('learning rate must not be negative')
        if self.weight_decay < 0:
            raise ContractError('weight decay must not be negative')
        if self.neg_pos_ratio < 1:
            raise ContractError('neg_pos_ratio must be at least 1')
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError('epochs and batch_size must be positive')
        if not self.seeds:
            raise ContractError('at least one seed is required')
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ContractError('invalid Adam hyper-parameters')


def resample(labels, ratio=5, rng=None):
    """
    Keep every positive and at most ratio × positives negatives drawn without
    replacement; returns the selected indices in increasing order.
    """
    labels = np.asarray(getattr(labels, 'y', labels))
    if ratio < 1:
        raise ContractError('ratio must be at least 1')
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)
    if positives.size == 0:
        raise ResampleError('cannot resample to a %d:1 ratio without positive samples' % ratio)
    rng = rng if rng is not None else np.random.default_rng()
    wanted = int(ratio * positives.size)
    if negatives.size > wanted:
        negatives = rng.choice(negatives, size=wanted, replace=False)
    return np.sort(np.concatenate([positives, negatives]))


def xavier_init(shape, rng, name=None):
    """Xavier normal weights (variance 2 / (fan_in + fan_out)); vectors are biases and start at zero"""
    shape = tuple(shape)
    if len(shape) == 1:
        return Tensor(np.zeros(shape), requires_grad=True, name=name)
    if len(shape) != 2:
        raise ContractError('xavier_init needs a matrix or a bias vector shape')
    std = np.sqrt(2.0 / (shape[0] + shape[1]))
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)


def init_params(kind, config, rng):
    params = ModelParams()
    for name, shape, role in param_shapes(kind, config):
        if role == 'weight':
            params[name] = xavier_init(shape, rng, name)
        elif role == 'gain':
            params[name] = Tensor(np.ones(shape), requires_grad=True, name=name)
        else:
            params[name] = Tensor(np.zeros(shape), requires_grad=True, name=name)
    return params


class Adam(object):
    """
    Adam with decoupled weight decay: every step shrinks the parameters by
    the factor (1 - weight_decay) independently of the learning rate.
    """

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self.m = {name: np.zeros_like(item.data) for name, item in params.items()}
        self.v = {name: np.zeros_like(item.data) for name, item in params.items()}

    def step(self):
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, item in self.params.items():
            grad = item.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            if self.weight_decay:
                item.data *= 1.0 - self.weight_decay
            item.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        if not self.params.all_finite():
            raise TrainingDivergedError('a parameter became non-finite after optimizer step %d' % self.steps)


@dataclass
class TrainResult(object):
    kind: str
    seed: int
    model: Model
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_auprc: float = None


class Trainer(object):
    """Trains one model kind for one seed; all randomness comes from streams of that seed"""

    def __init__(self, kind, model_config, config, adjacency=None):
        if kind in ('gnn_causal', 'gnn_full') and adjacency is None:
            raise ContractError('%s needs an adjacency matrix' % kind)
        self.kind = kind
        self.model_config = model_config
        self.config = config
        self.adjacency = adjacency if kind in GRAPH_KINDS else None

    def _validation_scores(self, model, validation, indices):
        if validation is None or indices is None:
            return None
        subset = validation.subset(indices)
        try:
            return auprc(model.confidence(subset), subset.y)
        except UndefinedMetricError:
            return None

    def train(self, train_batch, validation=None, seed=0):
        config = self.config
        run_logger = log.RunLogger(logger, self.kind, seed)
        model = Model(self.kind, self.model_config, init_params(self.kind, self.model_config, seeding.stream(seed, 'init')), self.adjacency)
        optimizer = Adam(model.params, config.lr, config.weight_decay, (config.beta1, config.beta2), config.eps)
        resample_rng = seeding.stream(seed, 'resample')
        shuffle_rng = seeding.stream(seed, 'shuffle')
        validation_indices = None
        if validation is not None and validation.positives:
            validation_indices = resample(validation.y, config.neg_pos_ratio, seeding.stream(seed, 'validation-resample'))
        elif validation is not None:
            run_logger.warning('validation split has no positive samples; selecting the last epoch')

        result = TrainResult(self.kind, seed, model)
        best_params = None
        best_score = -np.inf
        indices = resample(train_batch.y, config.neg_pos_ratio, resample_rng)
        notification_center = NotificationCenter()
        for epoch in range(1, config.epochs + 1):
            if config.refresh_resample and epoch > 1:
                indices = resample(train_batch.y, config.neg_pos_ratio, resample_rng)
            order = shuffle_rng.permutation(indices)
            losses = []
            for start in range(0, order.size, config.batch_size):
                batch = train_batch.subset(order[start:start + config.batch_size])
                model.params.zero_grad()
                try:
                    with Tape():
                        loss, _ = model.loss(batch)
                except tensor.NonFiniteError as e:
                    raise TrainingDivergedError('[%s seed=%d] non-finite values in epoch %d: %s' % (self.kind, seed, epoch, e)) from None
                if not np.isfinite(loss.item()):
                    raise TrainingDivergedError('[%s seed=%d] loss is %r in epoch %d' % (self.kind, seed, loss.item(), epoch))
                tensor.backward(loss)
                optimizer.step()
                losses.append(loss.item() * len(batch))
            epoch_loss = float(np.sum(losses) / order.size)
            val_auprc = self._validation_scores(model, validation, validation_indices)
            result.history.append({'epoch': epoch, 'loss': epoch_loss, 'val_auprc': val_auprc})
            run_logger.debug('epoch %d: loss %.6f, validation AUPRC %s', epoch, epoch_loss, 'n/a' if val_auprc is None else '%.4f' % val_auprc)
            notification_center.post_notification('TrainerDidFinishEpoch', sender=self,
                                                  data=NotificationData(model=self.kind, seed=seed, epoch=epoch, loss=epoch_loss, val_auprc=val_auprc))
            if val_auprc is not None and val_auprc > best_score:
                best_score = val_auprc
                best_params = model.params.copy()
                result.best_epoch = epoch
                result.best_val_auprc = val_auprc

        if best_params is not None:
            model.params.assign(best_params)
        else:
            result.best_epoch = config.epochs
        run_logger.info('selected epoch %d (validation AUPRC %s)', result.best_epoch, 'n/a' if result.best_val_auprc is None else '%.4f' % result.best_val_auprc)
        notification_center.post_notification('TrainerDidSelectModel', sender=self,
                                              data=NotificationData(model=self.kind, seed=seed, epoch=result.best_epoch, val_auprc=result.best_val_auprc))
        return result


def train(kind, adjacency, windows, config, model_config, seed=0):
    """Train one model on the train split of windows, selecting the epoch with the best validation AUPRC"""
    return Trainer(kind, model_config, config, adjacency).train(windows.train, windows.validation, seed)


def train_seeds(kind, adjacency, windows, config, model_config):
    """One training run per configured seed; the runs are independent jobs"""
    trainer = Trainer(kind, model_config, config, adjacency)
    return run_jobs(lambda seed: trainer.train(windows.train, windows.validation, seed), config.seeds,
                    max_threads=config.jobs, name='train-%s' % kind)
