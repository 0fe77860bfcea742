# models/toy_trainer.py - Desk-scale MLP noise predictor with manual gradients
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit, logit
from tqdm import tqdm

from models import schedule_engine as se
from models.analytic_process import Predictor, PredictorTag, sample_mixture
from models.condition_sharing import PartitionSchedule, f_T
from models.records import (
    read_container,
    rng_state_from_json,
    rng_state_to_json,
    write_container,
)
from utils.errors import CheckpointError, ConfigError, DegenerateInputError, DomainError, TrainingDivergedError
from utils.lanes import lane_rng

logger = logging.getLogger(__name__)

MAX_FREQUENCY_PERIOD = 1e4
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 1000
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

_CLAMP_WARNED = set()


class Activation(str, Enum):
    SILU = 'silu'
    RELU = 'relu'


class Objective(str, Enum):
    EPS = 'eps'
    V = 'v'


class ConditionMap(str, Enum):
    IDENTITY = 'identity'
    SHARED = 'shared'
    REMAP = 'remap'


class RemapKind(str, Enum):
    INVERSE_T = 'inverse_t'
    INVERSE_SIGMOID = 'inverse_sigmoid'


class TimeSampling(str, Enum):
    UNIFORM_T = 'uniform_t'
    UNIFORM_LAMBDA = 'uniform_lambda'


# --- network ----------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    data_dim: int = 2
    hidden: tuple = (128, 128, 128)
    activation: Activation = Activation.SILU
    embedding_dim: int = 32
    condition_scale: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, 'hidden', tuple(int(h) for h in self.hidden))
        object.__setattr__(self, 'activation', Activation(self.activation))
        if self.data_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError('all layer widths must be at least 1')
        if self.embedding_dim < 2 or self.embedding_dim % 2:
            raise ConfigError(f'embedding_dim must be even and positive, got {self.embedding_dim}')

    @property
    def input_dim(self):
        return self.data_dim + self.embedding_dim

    @property
    def widths(self):
        return (self.input_dim,) + self.hidden + (self.data_dim,)

    @classmethod
    def from_config(cls, cfg, data_dim, condition_map=None):
        """Network shape from cfg; ``condition_map`` overrides cfg['CONDITION_MAP'] for the input scale"""
        remap = ConditionMap(condition_map or cfg['CONDITION_MAP']) == ConditionMap.REMAP
        return cls(
            data_dim=data_dim,
            hidden=tuple(cfg['HIDDEN']),
            activation=Activation(cfg['ACTIVATION']),
            embedding_dim=int(cfg['EMBEDDING_DIM']),
            condition_scale=1.0 if remap else 1000.0,
        )

    def to_dict(self):
        return {
            'data_dim': self.data_dim,
            'hidden': list(self.hidden),
            'activation': self.activation.value,
            'embedding_dim': self.embedding_dim,
            'condition_scale': self.condition_scale,
        }


def time_embedding(condition, dim):
    """Sinusoidal embedding, periods geometric from 1 to 1e4"""
    c = np.asarray(condition, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = MAX_FREQUENCY_PERIOD ** (-np.arange(half) / max(half - 1, 1))
    args = c * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _activate(kind, z):
    if kind == Activation.RELU:
        return np.maximum(z, 0.0)
    return z * expit(z)


def _activate_grad(kind, z):
    if kind == Activation.RELU:
        return (z > 0).astype(np.float64)
    s = expit(z)
    return s + z * s * (1.0 - s)


class Mlp:
    """Fully connected network on [x, embed(condition)] with cached forward pass"""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params

    @classmethod
    def initialize(cls, spec, rng):
        params = {}
        widths = spec.widths
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            params[f'W{i}'] = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
            params[f'b{i}'] = np.zeros(fan_out)
        return cls(spec, params)

    @property
    def n_layers(self):
        return len(self.spec.widths) - 1

    def copy(self):
        return Mlp(self.spec, {k: v.copy() for k, v in self.params.items()})

    def _inputs(self, x, condition):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.spec.data_dim:
            raise DomainError(f'x has dimension {x.shape[1]}, network expects {self.spec.data_dim}')
        c = np.asarray(condition, dtype=np.float64)
        if c.ndim and c.shape[0] != x.shape[0]:
            raise DomainError('per-row condition must match the batch size')
        c = np.broadcast_to(c.reshape(-1), (x.shape[0],))
        emb = time_embedding(c * self.spec.condition_scale, self.spec.embedding_dim)
        return np.concatenate([x, emb], axis=1)

    def forward(self, x, condition):
        """Returns (output, cache) for a batch x (N, d) and scalar or per-row condition"""
        h = self._inputs(x, condition)
        cache = {'inputs': [h], 'pre': []}
        for i in range(self.n_layers):
            z = h @ self.params[f'W{i}'] + self.params[f'b{i}']
            if i == self.n_layers - 1:
                return z, cache
            cache['pre'].append(z)
            h = _activate(self.spec.activation, z)
            cache['inputs'].append(h)

    def predict(self, x, condition):
        return self.forward(x, condition)[0]

    def backward(self, cache, dout):
        """Reverse-mode gradients of sum(dout * output) with respect to every parameter"""
        grads = {}
        delta = dout
        for i in reversed(range(self.n_layers)):
            grads[f'W{i}'] = cache['inputs'][i].T @ delta
            grads[f'b{i}'] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.params[f'W{i}'].T) * _activate_grad(self.spec.activation, cache['pre'][i - 1])
        return grads


def _add_grads(total, other, scale=1.0):
    for k, v in other.items():
        total[k] = total[k] + scale * v
    return total


# --- condition maps ---------------------------------------------------------------------

def remap_condition(kind, t, T=1000, cap=1000.0):
    """Condition value lambda = f(t): 1/t or logit(t), capped at K (+-K for logit)"""
    kind = RemapKind(kind)
    t = np.asarray(t, dtype=np.float64)
    floor = 1.0 / T
    high = 1.0 if kind == RemapKind.INVERSE_T else 1.0 - floor
    if np.any(t < floor) or np.any(t > high):
        if kind not in _CLAMP_WARNED:
            _CLAMP_WARNED.add(kind)
            logger.warning('remap %s: t clamped to [%g, %g]', kind.value, floor, high)
        t = np.clip(t, floor, high)
    if kind == RemapKind.INVERSE_T:
        lam = np.minimum(1.0 / t, cap)
    else:
        lam = np.clip(logit(t), -cap, cap)
    return float(lam) if lam.ndim == 0 else lam


def remap_inverse(kind, lam, T=1000):
    """t = f^{-1}(lambda) clamped to the discrete grid range"""
    kind = RemapKind(kind)
    lam = np.asarray(lam, dtype=np.float64)
    floor = 1.0 / T
    if kind == RemapKind.INVERSE_T:
        with np.errstate(divide='ignore'):
            t = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), np.inf)
        t = np.clip(t, floor, 1.0)
    else:
        t = np.clip(expit(lam), floor, 1.0 - floor)
    return float(t) if t.ndim == 0 else t


# --- training configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    objective: Objective = Objective.EPS
    condition_map: ConditionMap = ConditionMap.IDENTITY
    partition: PartitionSchedule = None
    remap_kind: RemapKind = RemapKind.INVERSE_T
    time_sampling: TimeSampling = TimeSampling.UNIFORM_T
    lambda_cap: float = 1000.0
    reg_weight: float = 0.0
    reg_dt: float = 1e-3
    reg_random_offset: bool = False
    lr: float = 1e-3
    batch_size: int = 256
    steps: int = 20000
    seed: int = 0
    ema_decay: float = 0.999
    log_every: int = 500

    def __post_init__(self):
        for name, kind in (('objective', Objective), ('condition_map', ConditionMap),
                           ('remap_kind', RemapKind), ('time_sampling', TimeSampling)):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError as e:
                raise ConfigError(str(e)) from e
        if self.time_sampling == TimeSampling.UNIFORM_LAMBDA and self.condition_map != ConditionMap.REMAP:
            raise ConfigError('uniform_lambda time sampling needs the remap condition map')
        if self.condition_map == ConditionMap.SHARED and self.partition is None:
            raise ConfigError('shared condition map needs a partition (T_TILDE, NUM_INTERVALS)')
        if self.reg_weight < 0 or self.reg_dt <= 0:
            raise ConfigError('reg_weight must be >= 0 and reg_dt > 0')
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError('ema_decay must lie in [0, 1)')
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0 or self.lambda_cap <= 0:
            raise ConfigError('lr, batch_size, lambda_cap must be positive and steps nonnegative')

    @property
    def tag(self):
        return PredictorTag.REMAPPED_MLP if self.condition_map == ConditionMap.REMAP else PredictorTag.TRAINED_MLP

    @classmethod
    def from_config(cls, cfg):
        condition_map = ConditionMap(cfg['CONDITION_MAP'])
        partition = PartitionSchedule.from_config(cfg) if condition_map == ConditionMap.SHARED else None
        return cls(
            objective=cfg['OBJECTIVE'],
            condition_map=condition_map,
            partition=partition,
            remap_kind=cfg['REMAP_KIND'],
            time_sampling=cfg['TIME_SAMPLING'],
            lambda_cap=float(cfg['LAMBDA_CAP']),
            reg_weight=float(cfg['REG_WEIGHT']),
            reg_dt=float(cfg['REG_DT']),
            reg_random_offset=bool(cfg['REG_RANDOM_OFFSET']),
            lr=float(cfg['LEARNING_RATE']),
            batch_size=int(cfg['BATCH_SIZE']),
            steps=int(cfg['TRAIN_STEPS']),
            seed=int(cfg['SEED']),
            ema_decay=float(cfg['EMA_DECAY']),
            log_every=int(cfg['LOG_EVERY']),
        )

    def to_dict(self):
        return {
            'objective': self.objective.value,
            'condition_map': self.condition_map.value,
            'partition': self.partition.to_config() if self.partition else None,
            'remap_kind': self.remap_kind.value,
            'time_sampling': self.time_sampling.value,
            'lambda_cap': self.lambda_cap,
            'reg_weight': self.reg_weight,
            'reg_dt': self.reg_dt,
            'reg_random_offset': self.reg_random_offset,
            'lr': self.lr,
            'batch_size': self.batch_size,
            'steps': self.steps,
            'seed': self.seed,
            'ema_decay': self.ema_decay,
            'log_every': self.log_every,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        part = data.pop('partition', None)
        if part:
            data['partition'] = PartitionSchedule.from_config(part)
        return cls(**data)


def network_condition(cfg, t, T=1000):
    """The value the network is conditioned on for true time t"""
    if cfg.condition_map == ConditionMap.SHARED:
        return f_T(cfg.partition, t, T)
    if cfg.condition_map == ConditionMap.REMAP:
        return remap_condition(cfg.remap_kind, t, T, cfg.lambda_cap)
    return t


def realized_times(cfg, n, rng, T=1000):
    """Training times drawn under cfg.time_sampling: the t the network effectively sees"""
    if cfg.time_sampling == TimeSampling.UNIFORM_LAMBDA:
        if cfg.remap_kind == RemapKind.INVERSE_T:
            lam = rng.uniform(0.0, cfg.lambda_cap, size=n)
        else:
            lam = rng.uniform(-cfg.lambda_cap, cfg.lambda_cap, size=n)
        return np.asarray(remap_inverse(cfg.remap_kind, lam, T)).reshape(n)
    return rng.integers(1, T + 1, size=n) / T


# --- batches, loss and penalty -------------------------------------------------------------------

@dataclass
class TrainingBatch:
    x0: np.ndarray
    t: np.ndarray
    eps: np.ndarray
    x_t: np.ndarray
    condition: np.ndarray
    target: np.ndarray
    t_prime: np.ndarray = None
    condition_prime: np.ndarray = None


def make_batch(gm, spec, cfg, rng, batch_size=None):
    """One draw of (x0, t, eps) and the regression target for cfg.objective"""
    n = batch_size or cfg.batch_size
    x0 = sample_mixture(gm, n, rng)
    t = realized_times(cfg, n, rng, spec.T)
    eps = rng.standard_normal(x0.shape)
    a = np.asarray(se.alpha(spec, t)).reshape(-1, 1)
    s = np.asarray(se.sigma(spec, t)).reshape(-1, 1)
    x_t = a * x0 + s * eps
    target = eps if cfg.objective == Objective.EPS else a * eps - s * x0
    batch = TrainingBatch(x0, t, eps, x_t, network_condition(cfg, t, spec.T), target)
    if cfg.reg_weight > 0:
        offset = rng.uniform(0.0, 2.0 * cfg.reg_dt, size=n) if cfg.reg_random_offset else np.full(n, cfg.reg_dt)
        offset = np.maximum(offset, 1e-12)
        # step backwards where t + offset would leave [0, 1]
        t_prime = np.where(t + offset <= 1.0, t + offset, t - offset)
        batch.t_prime = t_prime
        batch.condition_prime = network_condition(cfg, t_prime, spec.T)
    return batch


@dataclass
class PenaltyTerm:
    value: float
    grads: dict


def ddpm_r_penalty(mlp, x, t, t_prime, condition=None, condition_prime=None):
    """mean ||net(x, c(t)) - net(x, c(t'))|| / |t - t'| and its parameter gradients.

    ``condition``/``condition_prime`` default to t and t'.
    """
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (len(x),))
    t_prime = np.broadcast_to(np.asarray(t_prime, dtype=np.float64).reshape(-1), (len(x),))
    dt = np.abs(t - t_prime)
    if np.any(dt < 1e-12):
        raise DegenerateInputError('DDPM-r penalty needs t != t\'')
    c = t if condition is None else condition
    c_prime = t_prime if condition_prime is None else condition_prime
    out, cache = mlp.forward(x, c)
    out_prime, cache_prime = mlp.forward(x, c_prime)
    diff = out - out_prime
    norms = np.linalg.norm(diff, axis=1)
    value = float(np.mean(norms / dt))
    safe = np.where(norms > 0, norms, 1.0)
    ddiff = np.where(norms[:, None] > 0, diff / safe[:, None], 0.0) / (dt[:, None] * len(x))
    grads = mlp.backward(cache, ddiff)
    _add_grads(grads, mlp.backward(cache_prime, ddiff), scale=-1.0)
    return PenaltyTerm(value, grads)


@dataclass
class LossTerms:
    total: float
    mse: float
    penalty: float
    grads: dict


def loss_and_grads(mlp, batch, reg_weight=0.0):
    """Mean squared error over all elements plus the optional weighted penalty"""
    out, cache = mlp.forward(batch.x_t, batch.condition)
    residual = out - batch.target
    mse = float(np.mean(residual ** 2))
    grads = mlp.backward(cache, 2.0 * residual / residual.size)
    penalty = 0.0
    if reg_weight > 0 and batch.t_prime is not None:
        term = ddpm_r_penalty(mlp, batch.x_t, batch.t, batch.t_prime, batch.condition, batch.condition_prime)
        penalty = term.value
        _add_grads(grads, term.grads, scale=reg_weight)
    return LossTerms(mse + reg_weight * penalty, mse, penalty, grads)


# --- optimizer and state ------------------------------------------------------------------------

class Adam:
    def __init__(self, params, lr, betas=ADAM_BETAS, eps=ADAM_EPS):
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        b1, b2 = self.betas
        self.count += 1
        c1 = 1.0 - b1 ** self.count
        c2 = 1.0 - b2 ** self.count
        for k in params:
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * grads[k] ** 2
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainState:
    mlp: Mlp
    ema: Mlp
    optimizer: Adam
    rng: np.random.Generator
    step: int = 0
    initial_loss: float = None
    above_count: int = 0
    losses: list = field(default_factory=list)
    penalties: list = field(default_factory=list)


def init_state(mlp_spec, cfg):
    mlp = Mlp.initialize(mlp_spec, lane_rng(cfg.seed, 'init'))
    return TrainState(
        mlp=mlp,
        ema=mlp.copy(),
        optimizer=Adam(mlp.params, cfg.lr),
        rng=lane_rng(cfg.seed, 'train'),
    )


class TrainedMlp(Predictor):
    """Predictor over fixed network weights; applies the training condition map to t"""

    def __init__(self, mlp, cfg, spec):
        self.mlp = mlp
        self.cfg = cfg
        self.spec = spec
        self.tag = cfg.tag
        self.objective = cfg.objective.value
        self.shares_conditions = cfg.condition_map == ConditionMap.SHARED

    def predict(self, x, t):
        return self.mlp.predict(x, network_condition(self.cfg, t, self.spec.T))


@dataclass
class TrainResult:
    predictor: TrainedMlp
    state: TrainState
    loss_curve: np.ndarray
    penalty_curve: np.ndarray


def _ema_update(ema, params, decay):
    for k, v in params.items():
        ema.params[k] = decay * ema.params[k] + (1.0 - decay) * v


def _check_divergence(state, loss):
    if not math.isfinite(loss):
        raise TrainingDivergedError(f'non-finite loss at step {state.step}')
    if state.initial_loss is None:
        state.initial_loss = loss
    if loss > DIVERGENCE_FACTOR * state.initial_loss:
        state.above_count += 1
        if state.above_count >= DIVERGENCE_PATIENCE:
            raise TrainingDivergedError(
                f'loss above {DIVERGENCE_FACTOR:g}x its initial value for {DIVERGENCE_PATIENCE} steps '
                f'(step {state.step}, loss {loss:.4g})'
            )
    else:
        state.above_count = 0


def train(mlp_spec, gm, spec, cfg, state=None, progress=False):
    """Regress the network on the configured target; returns the EMA predictor.

    Passing a restored ``state`` continues the run up to cfg.steps total steps.
    """
    if mlp_spec.data_dim != gm.dim:
        raise DomainError(f'network dimension {mlp_spec.data_dim} does not match data dimension {gm.dim}')
    state = init_state(mlp_spec, cfg) if state is None else state
    bar = tqdm(range(state.step, cfg.steps), desc='train', disable=not progress, leave=False)
    for _ in bar:
        batch = make_batch(gm, spec, cfg, state.rng)
        terms = loss_and_grads(state.mlp, batch, cfg.reg_weight)
        _check_divergence(state, terms.total)
        state.optimizer.step(state.mlp.params, terms.grads)
        _ema_update(state.ema, state.mlp.params, cfg.ema_decay)
        state.losses.append(terms.mse)
        state.penalties.append(terms.penalty)
        state.step += 1
        if cfg.log_every and state.step % cfg.log_every == 0:
            recent = float(np.mean(state.losses[-cfg.log_every:]))
            logger.info('step %d: loss %.5f (mean of last %d %.5f)', state.step, terms.mse, cfg.log_every, recent)
            bar.set_postfix(loss=f'{recent:.4f}')
    return TrainResult(
        predictor=TrainedMlp(state.ema, cfg, spec),
        state=state,
        loss_curve=np.asarray(state.losses),
        penalty_curve=np.asarray(state.penalties),
    )


# --- checkpoints ---------------------------------------------------------------------------------

def save_checkpoint(path, state, cfg, spec):
    arrays = {}
    for prefix, params in (('param', state.mlp.params), ('ema', state.ema.params),
                           ('adam_m', state.optimizer.m), ('adam_v', state.optimizer.v)):
        for k, v in params.items():
            arrays[f'{prefix}/{k}'] = v
    arrays['losses'] = np.asarray(state.losses, dtype=np.float64)
    arrays['penalties'] = np.asarray(state.penalties, dtype=np.float64)
    header = {
        'mlp_spec': state.mlp.spec.to_dict(),
        'train_config': cfg.to_dict(),
        'schedule': spec.to_config(),
        'step': state.step,
        'initial_loss': state.initial_loss,
        'above_count': state.above_count,
        'adam_count': state.optimizer.count,
        'rng_state': rng_state_to_json(state.rng.bit_generator.state),
    }
    write_container(path, header, arrays)


def load_checkpoint(path):
    """Returns (state, train_config, schedule_config)"""
    header, arrays = read_container(path)
    try:
        mlp_spec = MlpSpec(**header['mlp_spec'])
        cfg = TrainConfig.from_dict(header['train_config'])

        def group(prefix):
            return {k.split('/', 1)[1]: v.copy() for k, v in arrays.items() if k.startswith(prefix + '/')}

        mlp = Mlp(mlp_spec, group('param'))
        optimizer = Adam(mlp.params, cfg.lr)
        optimizer.m, optimizer.v, optimizer.count = group('adam_m'), group('adam_v'), header['adam_count']
        rng = np.random.Generator(np.random.Philox())
        rng.bit_generator.state = rng_state_from_json(header['rng_state'])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f'incomplete checkpoint {path}: {e}') from e
    state = TrainState(
        mlp=mlp,
        ema=Mlp(mlp_spec, group('ema')),
        optimizer=optimizer,
        rng=rng,
        step=header['step'],
        initial_loss=header['initial_loss'],
        above_count=header['above_count'],
        losses=arrays['losses'].tolist(),
        penalties=arrays['penalties'].tolist(),
    )
    return state, cfg, header['schedule']
