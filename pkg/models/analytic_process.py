# models/analytic_process.py - Closed-form perturbed marginals, scores and optimal predictors
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp, softmax

from models import schedule_engine as se
from utils.errors import DegenerateInputError, DomainError
from utils.validators import validate_required_fields

logger = logging.getLogger(__name__)

CUSTOM_MIXTURE_FIELDS = ('MIXTURE_WEIGHTS', 'MIXTURE_MEANS', 'MIXTURE_COVARIANCES')


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Data distribution q0 = sum_k w_k N(mu_k, Sigma_k)"""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    name: str = 'custom'

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covariances = np.asarray(self.covariances, dtype=np.float64)
        if covariances.ndim == 2:
            covariances = covariances[None]
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError('mixture weights must be positive and sum to 1')
        k, d = means.shape
        if weights.shape[0] != k or covariances.shape != (k, d, d):
            raise DomainError('mixture components must share dimension d')
        if not np.allclose(covariances, np.swapaxes(covariances, -1, -2)):
            raise DomainError('covariances must be symmetric')
        try:
            chol = np.linalg.cholesky(covariances)
        except np.linalg.LinAlgError as e:
            raise DomainError(f'covariance is not positive definite: {e}') from e
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'covariances', covariances)
        object.__setattr__(self, '_chol', chol)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def is_standard_normal(self):
        return (self.n_components == 1 and not np.any(self.means)
                and np.array_equal(self.covariances[0], np.eye(self.dim)))

    @classmethod
    def standard_normal(cls, dim=2):
        return cls(np.ones(1), np.zeros((1, dim)), np.eye(dim)[None], name='standard_normal')

    @classmethod
    def ring(cls, n_components=8, radius=1.0, std=0.05):
        """Equal-weight isotropic Gaussians evenly spaced on a circle in d = 2"""
        angles = 2.0 * np.pi * np.arange(n_components) / n_components
        means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        covariances = np.tile((std ** 2) * np.eye(2), (n_components, 1, 1))
        return cls(np.full(n_components, 1.0 / n_components), means, covariances, name='ring')

    @classmethod
    def from_config(cls, cfg):
        kind = cfg['DATA_KIND']
        if kind == 'standard_normal':
            return cls.standard_normal(int(cfg['DATA_DIM']))
        if kind == 'ring':
            return cls.ring(int(cfg['RING_COMPONENTS']), float(cfg['RING_RADIUS']), float(cfg['RING_STD']))
        if kind == 'custom':
            validation_error = validate_required_fields(cfg, CUSTOM_MIXTURE_FIELDS)
            if validation_error:
                raise DomainError(f'custom mixture: {validation_error}')
            return cls(cfg['MIXTURE_WEIGHTS'], cfg['MIXTURE_MEANS'], cfg['MIXTURE_COVARIANCES'])
        raise DomainError(f'unknown data kind {kind!r}')

    def to_config(self):
        return {
            'DATA_KIND': 'custom',
            'MIXTURE_WEIGHTS': self.weights.tolist(),
            'MIXTURE_MEANS': self.means.tolist(),
            'MIXTURE_COVARIANCES': self.covariances.tolist(),
        }


class PredictorTag(str, Enum):
    ANALYTIC_EPS = 'analytic_eps'
    ANALYTIC_V = 'analytic_v'
    SHARED_ANALYTIC = 'shared_analytic'
    TRAINED_MLP = 'trained_mlp'
    REMAPPED_MLP = 'remapped_mlp'


class Predictor:
    """Uniform interface: predict(x, t) for a batch x (N, d) and scalar or per-row t"""
    tag = None
    objective = 'eps'
    # true when predict() already maps t to its shared condition
    shares_conditions = False

    def predict(self, x, t):
        raise NotImplementedError

    def __call__(self, x, t):
        return self.predict(x, t)


class AnalyticEps(Predictor):
    tag = PredictorTag.ANALYTIC_EPS

    def __init__(self, gm, spec):
        self.gm = gm
        self.spec = spec

    def predict(self, x, t):
        return eps_optimal(self.gm, self.spec, t, x)


class AnalyticV(Predictor):
    tag = PredictorTag.ANALYTIC_V
    objective = 'v'

    def __init__(self, gm, spec):
        self.gm = gm
        self.spec = spec

    def predict(self, x, t):
        return v_optimal(self.gm, self.spec, t, x)


def predicted_eps(pred, spec, x, t, condition=None):
    """Predictor output converted to an epsilon prediction (eps = sigma x + alpha v for v-models).

    ``condition`` is the time value fed to the predictor when it differs from
    the true time t of x (shared or snapped conditions).
    """
    out = pred.predict(x, t if condition is None else condition)
    if pred.objective == 'v':
        return _per_row(se.sigma(spec, t)) * x + _per_row(se.alpha(spec, t)) * out
    return out


# --- marginals ----------------------------------------------------------------

def marginal_at(gm, spec, tau):
    """Exact perturbed marginal: components N(alpha mu, alpha^2 Sigma + sigma^2 I)"""
    a = se.alpha(spec, tau)
    s = se.sigma(spec, tau)
    covariances = a * a * gm.covariances + s * s * np.eye(gm.dim)
    return GaussianMixture(gm.weights, a * gm.means, covariances, name=gm.name)


def _as_batch(gm, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != gm.dim:
        raise DomainError(f'x has dimension {x.shape[1]}, mixture has {gm.dim}')
    return x, single


def _component_terms(gm, spec, tau, x):
    """Per-row, per-component log densities and C^{-1}(x - m) for the marginal at tau"""
    tau_rows = np.asarray(tau, dtype=np.float64).reshape(-1)
    if np.ndim(tau) and tau_rows.shape[0] != x.shape[0]:
        raise DomainError('per-row tau must match the batch size')
    # one factorization per distinct row of tau: R = 1 for scalar tau, R = N otherwise
    a = np.asarray(se.alpha(spec, tau_rows)).reshape(-1, 1, 1, 1)
    s = np.asarray(se.sigma(spec, tau_rows)).reshape(-1, 1, 1, 1)
    eye = np.eye(gm.dim)
    cov = a * a * gm.covariances[None] + s * s * eye
    chol = np.linalg.cholesky(cov)
    chol_inv = np.linalg.solve(chol, np.broadcast_to(eye, chol.shape))
    diff = x[:, None, :, None] - a * gm.means[None, :, :, None]
    z = chol_inv @ diff
    solved = (np.swapaxes(chol_inv, -1, -2) @ z)[..., 0]
    quad = np.sum(z[..., 0] ** 2, axis=-1)
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    log_comp = -0.5 * (quad + log_det + gm.dim * math.log(2.0 * math.pi)) + np.log(gm.weights)[None]
    return log_comp, solved


def log_density(gm, spec, tau, x):
    x, single = _as_batch(gm, x)
    log_comp, _ = _component_terms(gm, spec, tau, x)
    out = logsumexp(log_comp, axis=1)
    return float(out[0]) if single else out


def score(gm, spec, tau, x):
    """Exact grad_x log q_tau(x) with responsibilities from log-sum-exp"""
    x, single = _as_batch(gm, x)
    log_comp, solved = _component_terms(gm, spec, tau, x)
    resp = softmax(log_comp, axis=1)
    out = -np.einsum('nk,nkd->nd', resp, solved)
    return out[0] if single else out


def _per_row(values):
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(-1, 1) if values.ndim else values


def eps_optimal(gm, spec, tau, x):
    """Optimal noise prediction -sigma(tau) * score"""
    return -_per_row(se.sigma(spec, tau)) * score(gm, spec, tau, x)


def v_optimal(gm, spec, tau, x):
    """Optimal v prediction -(sigma / alpha)(x + score).

    E[eps | x] = -sigma score and E[x0 | x] = (x + sigma^2 score) / alpha hold for
    any data distribution, so the expression is exact for mixtures as well.
    """
    a = _per_row(se.alpha(spec, tau))
    if np.any(a <= 0.0):
        raise DomainError('v prediction needs alpha(tau) > 0')
    s = _per_row(se.sigma(spec, tau))
    x_arr = np.asarray(x, dtype=np.float64)
    return -(s / a) * (x_arr + score(gm, spec, tau, x))


def v_conditional_oracle(gm, spec, tau, x, n, rng):
    """Importance-weighted Monte-Carlo estimate of E[alpha eps - sigma x0 | x_tau = x] for one x"""
    a = se.alpha(spec, tau)
    s = se.sigma(spec, tau)
    if s <= 0.0:
        return np.zeros(gm.dim)
    x0 = sample_mixture(gm, n, rng)
    log_w = -0.5 * np.sum((np.asarray(x)[None] - a * x0) ** 2, axis=1) / (s * s)
    w = softmax(log_w)
    mean_x0 = w @ x0
    mean_eps = (np.asarray(x) - a * mean_x0) / s
    return a * mean_eps - s * mean_x0


# --- sampling -------------------------------------------------------------------

def sample_mixture(gm, n, rng):
    """Exact ancestral draws: component by weight, then a Gaussian draw"""
    comp = rng.choice(gm.n_components, size=n, p=gm.weights)
    z = rng.standard_normal((n, gm.dim))
    return gm.means[comp] + np.einsum('nij,nj->ni', gm._chol[comp], z)


def sample_marginal(gm, spec, tau, n, rng):
    return sample_mixture(marginal_at(gm, spec, tau), n, rng)


def marginal_sampler(gm, spec, rng):
    """Callable (t, n) -> draws from q_t sharing one random stream"""
    def draw(t, n):
        return sample_marginal(gm, spec, t, n, rng)
    return draw


# --- Lipschitz estimation ------------------------------------------------------------

@dataclass
class LipschitzEstimate:
    t: float
    t_prime: float
    value: float
    stderr: float
    n: int


@dataclass
class LipschitzCurve:
    label: str
    t: np.ndarray
    K: np.ndarray
    stderr: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        return [(float(t), float(k), float(e)) for t, k, e in zip(self.t, self.K, self.stderr)]


def lipschitz_K(pred, spec, t, t_prime, sampler, N):
    """Monte-Carlo estimate of E ||pred(x, t) - pred(x, t')|| / |t - t'| with x ~ q_t"""
    dt = abs(t_prime - t)
    if dt < 1e-12:
        raise DegenerateInputError(f'|t - t\'| = {dt:g} is below 1e-12')
    if N < 1:
        raise DegenerateInputError('N must be at least 1')
    x = sampler(t, N)
    diff = np.linalg.norm(pred.predict(x, t) - pred.predict(x, t_prime), axis=1) / dt
    stderr = float(diff.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return LipschitzEstimate(t, t_prime, float(diff.mean()), stderr, N)


def singularity_scan(pred, spec, t_grid, dt, sampler, N, label=None):
    """K(t, t + dt) along an ascending grid"""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise DomainError('t_grid must be non-empty and strictly ascending')
    estimates = [lipschitz_K(pred, spec, t, t + dt, sampler, N) for t in t_grid]
    return LipschitzCurve(
        label=label or getattr(pred.tag, 'value', str(pred.tag)),
        t=t_grid,
        K=np.array([e.value for e in estimates]),
        stderr=np.array([e.stderr for e in estimates]),
        dt=dt,
        meta={'N': N},
    )


# --- perturbation probe -----------------------------------------------------------------

@dataclass
class PerturbationCurve:
    label: str
    scales: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray

    def rows(self):
        return [(float(s), float(e), float(se_)) for s, e, se_ in zip(self.scales, self.errors, self.stderr)]


def one_step_x0(pred, spec, x, t):
    return (x - se.sigma(spec, t) * predicted_eps(pred, spec, x, t)) / se.alpha(spec, t)


def perturbation_probe(pred, spec, t_tilde, scales, gm, N, rng, trajectory=False, steps=10, label=None):
    """Mean change of the predicted x0 when x_{t~} is perturbed by delta * z.

    The default compares one-step inversions of the forward kernel; with
    ``trajectory`` both inputs are integrated with deterministic DDIM down to the
    terminal floor first.
    """
    if not 0.0 < t_tilde < 1.0:
        raise DomainError('t_tilde must lie in (0, 1)')
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales < 0):
        raise DomainError('perturbation scales must be nonnegative')
    x = sample_marginal(gm, spec, t_tilde, N, rng)
    z = rng.standard_normal(x.shape)

    if trajectory:
        from models.samplers import ddim_trajectory

        def predict_x0(y):
            return ddim_trajectory(pred, spec, y, t_tilde, steps)
    else:
        def predict_x0(y):
            return one_step_x0(pred, spec, y, t_tilde)

    clean = predict_x0(x)
    errors, stderr = [], []
    for delta in scales:
        if delta == 0.0:
            errors.append(0.0)
            stderr.append(0.0)
            continue
        diff = np.linalg.norm(predict_x0(x + delta * z) - clean, axis=1)
        errors.append(float(diff.mean()))
        stderr.append(float(diff.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0)
    return PerturbationCurve(
        label=label or getattr(pred.tag, 'value', str(pred.tag)),
        scales=scales,
        errors=np.array(errors),
        stderr=np.array(stderr),
    )
