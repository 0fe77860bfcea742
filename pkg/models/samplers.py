# models/samplers.py - Reverse-time samplers with optional shared timestep conditions
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from models import schedule_engine as se
from models.analytic_process import predicted_eps, sample_mixture
from models.condition_sharing import PartitionSchedule, f_T
from utils.errors import ConfigError, DomainError, SamplingError
from utils.lanes import lane_rng, paginate_lanes

logger = logging.getLogger(__name__)

# alpha below this at tau = 1 is treated as zero when choosing the chain start
ALPHA_START_MIN = 1e-6
# alpha(1) above this makes x_T ~ N(0, I) a noticeable mismatch
ALPHA_TERMINAL_WARN = 1e-2


class SamplerKind(str, Enum):
    ANCESTRAL = 'ancestral'
    REVERSE_SDE_EULER = 'reverse_sde_euler'
    DDIM = 'ddim'
    DPM_SOLVER_1 = 'dpm_solver1'
    DPM_SOLVER_2 = 'dpm_solver2'
    DPM_SOLVER_3 = 'dpm_solver3'
    FORWARD_EULER = 'forward_euler'


SOLVER_ORDER = {
    SamplerKind.DPM_SOLVER_1: 1,
    SamplerKind.DPM_SOLVER_2: 2,
    SamplerKind.DPM_SOLVER_3: 3,
}
TIME_GRIDS = ('uniform', 'logsnr')


@dataclass(frozen=True)
class SamplerConfig:
    kind: SamplerKind = SamplerKind.ANCESTRAL
    nfe: int = 1000
    partition: PartitionSchedule = None
    seed: int = 0
    eta: float = 0.0
    lanes: int = 4
    grid: str = 'uniform'
    record_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', SamplerKind(self.kind))
        if self.nfe < self.order:
            raise ConfigError(f'nfe={self.nfe} is below the order {self.order} of {self.kind.value}')
        if self.eta < 0:
            raise ConfigError('eta must be nonnegative')
        if self.lanes < 1:
            raise ConfigError('lanes must be at least 1')
        if self.grid not in TIME_GRIDS:
            raise ConfigError(f'grid must be one of {", ".join(TIME_GRIDS)}')

    @property
    def order(self):
        return SOLVER_ORDER.get(self.kind, 1)

    @classmethod
    def from_config(cls, cfg, partition=None):
        return cls(
            kind=SamplerKind(cfg['SAMPLER_KIND']),
            nfe=int(cfg['NFE']),
            partition=partition,
            seed=int(cfg['SEED']),
            eta=float(cfg['ETA']),
            lanes=int(cfg['LANES']),
            grid=cfg.get('TIME_GRID', 'uniform'),
        )

    def to_dict(self):
        return {
            'kind': self.kind.value,
            'nfe': self.nfe,
            'partition': self.partition.to_config() if self.partition else None,
            'seed': self.seed,
            'eta': self.eta,
            'lanes': self.lanes,
            'grid': self.grid,
        }


@dataclass
class TrajectoryRecord:
    samples: np.ndarray
    times: list
    config: dict
    wall_time: float
    nfe_used: int
    snapshots: list = field(default_factory=list)


# --- predictor queries -------------------------------------------------------------

def _condition(pred, spec, t, partition):
    if partition is None or pred.shares_conditions:
        return t
    return f_T(partition, t, spec.T)


def _query(pred, spec, x, t, partition):
    return predicted_eps(pred, spec, x, t, condition=_condition(pred, spec, t, partition))


def t_floor(spec):
    return 1.0 / spec.T


def _start_tau(spec):
    if se.alpha(spec, 1.0) >= ALPHA_START_MIN:
        return 1.0
    return 1.0 - 1.0 / spec.T


def denoise(pred, spec, x, tau, partition=None):
    """One-step x0 estimate (x - sigma eps) / alpha"""
    eps = _query(pred, spec, x, tau, partition)
    return (x - se.sigma(spec, tau) * eps) / se.alpha(spec, tau)


# --- single steps -------------------------------------------------------------------

def ancestral_step(pred, spec, x_t, t, partition=None, rng=None, alphas=None):
    """One draw from the discrete reverse kernel at integer step t (no noise at t = 1)"""
    if not 1 <= t <= spec.T:
        raise DomainError(f'discrete step t must lie in [1, {spec.T}], got {t}')
    alphas = se.discrete_alphas(spec) if alphas is None else alphas
    a_t, a_prev = alphas[t], alphas[t - 1]
    sigma_t = math.sqrt(max(1.0 - a_t * a_t, 0.0))
    if sigma_t <= 0.0 or a_t <= 0.0:
        raise DomainError(f'degenerate discrete schedule at step {t}')
    beta_t = 1.0 - (a_t / a_prev) ** 2
    eps = _query(pred, spec, x_t, t / spec.T, partition)
    mean = (a_prev / a_t) * (x_t - (beta_t / sigma_t) * eps)
    if t == 1:
        return mean
    if rng is None:
        raise DomainError('ancestral_step needs rng for t > 1')
    return mean + math.sqrt(beta_t) * rng.standard_normal(np.shape(x_t))


def reverse_sde_euler_step(pred, spec, x, tau, dtau, noise, partition=None, diffusion_sq=None):
    """Euler-Maruyama step of the reverse SDE from tau to tau - dtau.

    ``diffusion_sq`` overrides g^2(tau); zero gives the plain drift step.
    """
    if dtau <= 0:
        raise DomainError('dtau must be positive')
    s = se.sigma(spec, tau)
    if s <= 0.0:
        raise DomainError(f'sigma({tau}) = 0; stop at the terminal floor')
    f, g2 = se.sde_coeffs(spec, tau)
    if diffusion_sq is not None:
        g2 = diffusion_sq
    score = -_query(pred, spec, x, tau, partition) / s
    drift = f * x - g2 * score
    return x - drift * dtau + math.sqrt(g2 * dtau) * noise


def forward_euler_step(spec, x, tau, dtau, noise):
    """Euler-Maruyama step of the forward SDE dx = f x dt + g dw"""
    f, g2 = se.sde_coeffs(spec, tau)
    return x + f * x * dtau + math.sqrt(g2 * dtau) * noise


def _check_pair(spec, t_from, t_to):
    if not t_from > t_to:
        raise DomainError('need t_from > t_to')
    if t_to < t_floor(spec) - 1e-12:
        raise DomainError(f't_to={t_to} is below the terminal floor {t_floor(spec)}')


def ddim_step(pred, spec, x, t_from, t_to, partition=None, eta=0.0, rng=None):
    _check_pair(spec, t_from, t_to)
    a_s, s_s = se.alpha(spec, t_from), se.sigma(spec, t_from)
    a_t, s_t = se.alpha(spec, t_to), se.sigma(spec, t_to)
    eps = _query(pred, spec, x, t_from, partition)
    x0 = (x - s_s * eps) / a_s
    if eta == 0.0:
        return a_t * x0 + s_t * eps
    if rng is None:
        raise DomainError('ddim_step with eta > 0 needs rng')
    noise_std = eta * (s_t / s_s) * math.sqrt(max(1.0 - (a_s / a_t) ** 2, 0.0))
    direction = math.sqrt(max(s_t * s_t - noise_std * noise_std, 0.0)) * eps
    return a_t * x0 + direction + noise_std * rng.standard_normal(np.shape(x))


def _at_lambda(spec, lam):
    tau = se.tau_from_lambda(spec, lam)
    return tau, se.alpha(spec, tau), se.sigma(spec, tau)


def dpm_solver_step(order, pred, spec, x, t_from, t_to, partition=None):
    """Singlestep exponential-integrator update in log-SNR time, orders 1 to 3"""
    if order not in (1, 2, 3):
        raise ConfigError(f'DPM-Solver order must be 1, 2 or 3, got {order}')
    _check_pair(spec, t_from, t_to)
    a_s, s_s = se.alpha(spec, t_from), se.sigma(spec, t_from)
    a_t, s_t = se.alpha(spec, t_to), se.sigma(spec, t_to)
    lam_s = math.log(a_s / s_s)
    h = math.log(a_t / s_t) - lam_s
    eps_s = _query(pred, spec, x, t_from, partition)
    base = (a_t / a_s) * x - s_t * math.expm1(h) * eps_s
    if order == 1:
        return base

    if order == 2:
        r1 = 0.5
        t1, a1, s1 = _at_lambda(spec, lam_s + r1 * h)
        u1 = (a1 / a_s) * x - s1 * math.expm1(r1 * h) * eps_s
        d1 = _query(pred, spec, u1, t1, partition) - eps_s
        return base - (s_t / (2.0 * r1)) * math.expm1(h) * d1

    r1, r2 = 1.0 / 3.0, 2.0 / 3.0
    t1, a1, s1 = _at_lambda(spec, lam_s + r1 * h)
    t2, a2, s2 = _at_lambda(spec, lam_s + r2 * h)
    u1 = (a1 / a_s) * x - s1 * math.expm1(r1 * h) * eps_s
    d1 = _query(pred, spec, u1, t1, partition) - eps_s
    u2 = ((a2 / a_s) * x - s2 * math.expm1(r2 * h) * eps_s
          - s2 * (r2 / r1) * (math.expm1(r2 * h) / (r2 * h) - 1.0) * d1)
    d2 = _query(pred, spec, u2, t2, partition) - eps_s
    return base - (s_t / r2) * (math.expm1(h) / h - 1.0) * d2


# --- grids and chains -----------------------------------------------------------------

def time_grid(spec, steps, grid='uniform', start=None):
    """Descending continuous times from the chain start to the terminal floor"""
    if steps < 1:
        raise DomainError('a time grid needs at least one step')
    start = _start_tau(spec) if start is None else start
    end = t_floor(spec)
    if grid == 'uniform':
        times = np.linspace(start, end, steps + 1)
    elif grid == 'logsnr':
        lams = np.linspace(se.lambda_(spec, start), se.lambda_(spec, end), steps + 1)
        times = np.array([se.tau_from_lambda(spec, lam) for lam in lams])
        times[0], times[-1] = start, end
    else:
        raise ConfigError(f'unknown time grid {grid!r}')
    return times


def step_count(config):
    """Solver steps that fit in the NFE budget (one evaluation kept for the final denoise)"""
    if config.kind == SamplerKind.ANCESTRAL:
        return config.nfe
    return max(1, (config.nfe - 1) // config.order)


def nfe_used(config, spec):
    if config.kind == SamplerKind.ANCESTRAL:
        return _ancestral_start(spec)
    return step_count(config) * config.order + 1


def _ancestral_start(spec):
    return spec.T if se.alpha(spec, 1.0) >= ALPHA_START_MIN else spec.T - 1


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise SamplingError('non-finite state during sampling', step=step)


def _run_chain(pred, spec, config, x, rng, snapshots):
    """Integrate one lane; returns the final state and the visited times"""
    partition = config.partition
    visited = []

    def record(i, tau, state):
        visited.append(float(tau))
        if config.record_every and i % config.record_every == 0:
            snapshots.setdefault(float(tau), []).append(state.copy())

    if config.kind == SamplerKind.ANCESTRAL:
        alphas = se.discrete_alphas(spec)
        for i, t in enumerate(range(_ancestral_start(spec), 0, -1)):
            x = ancestral_step(pred, spec, x, t, partition, rng, alphas)
            _check_finite(x, t)
            record(i, t / spec.T, x)
        return x, visited

    steps = step_count(config)
    times = time_grid(spec, steps, config.grid)
    for i in range(steps):
        t_from, t_to = times[i], times[i + 1]
        if config.kind == SamplerKind.DDIM:
            x = ddim_step(pred, spec, x, t_from, t_to, partition, config.eta, rng)
        elif config.kind == SamplerKind.REVERSE_SDE_EULER:
            noise = rng.standard_normal(x.shape)
            x = reverse_sde_euler_step(pred, spec, x, t_from, t_from - t_to, noise, partition)
        else:
            x = dpm_solver_step(config.order, pred, spec, x, t_from, t_to, partition)
        _check_finite(x, i + 1)
        record(i, t_to, x)
    x = denoise(pred, spec, x, times[-1], partition)
    _check_finite(x, steps + 1)
    return x, visited


def sample(pred, spec, config, n_samples, d):
    """Run the reverse chain from x_T ~ N(0, I) in independent seed-derived lanes"""
    if config.kind == SamplerKind.FORWARD_EULER:
        raise ConfigError('forward_euler simulates the forward process; use simulate_forward')
    if n_samples < 1:
        raise DomainError('n_samples must be at least 1')
    alpha_end = se.alpha(spec, 1.0)
    if alpha_end > ALPHA_TERMINAL_WARN:
        logger.warning('alpha(1) = %.4g: x_T ~ N(0, I) does not match the terminal marginal', alpha_end)

    started = time.perf_counter()
    parts, snapshots, times = [], {}, []
    for lane, (lo, hi) in enumerate(paginate_lanes(n_samples, config.lanes)):
        rng = lane_rng(config.seed, 'sample', lane)
        x = rng.standard_normal((hi - lo, d))
        x, times = _run_chain(pred, spec, config, x, rng, snapshots)
        parts.append(x)
    samples = np.concatenate(parts, axis=0)
    wall_time = time.perf_counter() - started
    logger.info('%s: %d samples, nfe=%d, %.2fs', config.kind.value, n_samples, config.nfe, wall_time)
    return TrajectoryRecord(
        samples=samples,
        times=times,
        config=config.to_dict(),
        wall_time=wall_time,
        nfe_used=nfe_used(config, spec),
        snapshots=[(t, np.concatenate(v, axis=0)) for t, v in snapshots.items()],
    )


def simulate_forward(gm, spec, n_samples, tau_end, steps, seed=0, lanes=4):
    """Euler-Maruyama integration of the forward SDE from x0 ~ q0 to tau_end"""
    se._check_tau(tau_end)
    if steps < 0:
        raise DomainError('steps must be nonnegative')
    started = time.perf_counter()
    parts = []
    times = np.linspace(0.0, tau_end, steps + 1) if steps else np.zeros(1)
    for lane, (lo, hi) in enumerate(paginate_lanes(n_samples, lanes)):
        rng = lane_rng(seed, 'forward', lane)
        x = sample_mixture(gm, hi - lo, rng)
        for i in range(steps):
            dtau = times[i + 1] - times[i]
            x = forward_euler_step(spec, x, times[i], dtau, rng.standard_normal(x.shape))
            _check_finite(x, i + 1)
        parts.append(x)
    return TrajectoryRecord(
        samples=np.concatenate(parts, axis=0),
        times=[float(t) for t in times[1:]],
        config={'kind': SamplerKind.FORWARD_EULER.value, 'steps': steps, 'tau_end': tau_end,
                'seed': seed, 'lanes': lanes},
        wall_time=time.perf_counter() - started,
        nfe_used=0,
    )


def ddim_trajectory(pred, spec, x, t_start, steps, partition=None):
    """Deterministic DDIM from t_start to the terminal floor, then the one-step x0 estimate"""
    times = time_grid(spec, steps, start=t_start)
    for i in range(steps):
        x = ddim_step(pred, spec, x, times[i], times[i + 1], partition)
    return denoise(pred, spec, x, times[-1], partition)
