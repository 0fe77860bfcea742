# models/condition_sharing.py - Timestep condition sharing near t = 0 and its error bound
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec
from scipy.stats import linregress

from models import schedule_engine as se
from models.analytic_process import Predictor, PredictorTag, _as_batch, eps_optimal, score
from utils.errors import BoundViolationError, ConfigError, DegenerateInputError, InsufficientRangeError

logger = logging.getLogger(__name__)

MIN_QUADRATURE_ORDER = 32
FIRST_INTERVAL_TOL = 1e-10
# boundary snapping tolerance for floating-point t
SNAP = 1e-12


@dataclass(frozen=True)
class PartitionSchedule:
    """Uniform partition 0 = t_0 < t_1 < ... < t_n = t_tilde of the shared interval"""
    t_tilde: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.t_tilde <= 1.0:
            raise DegenerateInputError(f't_tilde must lie in (0, 1], got {self.t_tilde}')
        if int(self.n) != self.n or self.n < 1:
            raise DegenerateInputError(f'n must be a positive integer, got {self.n}')

    @property
    def boundaries(self):
        return _boundaries(self.t_tilde, int(self.n))

    @property
    def delta_t(self):
        return self.t_tilde / self.n

    def grid_boundaries(self, T=None):
        """Boundaries floored onto the discrete grid {k / T}; 0 and t_tilde stay fixed"""
        if T is None:
            return self.boundaries
        return _grid_boundaries(self.t_tilde, int(self.n), int(T))

    def interval_index(self, t, T=None):
        """Index i of the sub-interval [t_i, t_{i+1}) containing each t < t_tilde.

        With ``T`` the floored boundaries of grid_boundaries(T) are used.
        """
        idx = np.searchsorted(self.grid_boundaries(T), np.asarray(t, dtype=np.float64) + SNAP, side='right') - 1
        return np.clip(idx, 0, self.n - 1)

    @classmethod
    def from_config(cls, cfg):
        return cls(float(cfg['T_TILDE']), int(cfg['NUM_INTERVALS']))

    def to_config(self):
        data = asdict(self)
        return {'T_TILDE': data['t_tilde'], 'NUM_INTERVALS': data['n']}


@lru_cache(maxsize=64)
def _boundaries(t_tilde, n):
    b = t_tilde * np.arange(n + 1, dtype=np.float64) / n
    b[-1] = t_tilde
    b.setflags(write=False)
    return b


@lru_cache(maxsize=64)
def _grid_boundaries(t_tilde, n, T):
    b = np.floor(_boundaries(t_tilde, n) * T + 1e-9) / T
    b[0], b[-1] = 0.0, t_tilde
    b.setflags(write=False)
    return b


def f_T(part, t, T=None):
    """Left endpoint of the containing sub-interval for t < t_tilde, identity otherwise.

    With ``T`` the boundaries are floored onto the discrete grid {k / T}, so
    f_T(f_T(t)) == f_T(t) holds on that grid as well.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    left = part.grid_boundaries(T)[part.interval_index(t_arr, T)]
    out = np.where(t_arr < part.t_tilde, left, t_arr)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=8)
def _leggauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def _check_order(order):
    if int(order) != order or order < MIN_QUADRATURE_ORDER:
        raise ConfigError(f'quadrature order must be an integer >= {MIN_QUADRATURE_ORDER}, got {order}')


def _gl_mean_shared_interval(gm, spec, left, right, x, order):
    """Gauss-Legendre mean of eps over [left, right] for a batch sharing one interval"""
    nodes, weights = _leggauss(order)
    half = 0.5 * (right - left)
    total = np.zeros_like(x)
    for node, weight in zip(nodes, weights):
        total += weight * eps_optimal(gm, spec, left + half * (node + 1.0), x)
    return 0.5 * total


def _gl_mean_per_row(gm, spec, lefts, rights, x, order):
    """Gauss-Legendre mean of eps where every row has its own interval"""
    nodes, weights = _leggauss(order)
    half = 0.5 * (rights - lefts)
    tau = lefts[:, None] + half[:, None] * (nodes[None, :] + 1.0)
    x_rep = np.repeat(x, order, axis=0)
    eps = eps_optimal(gm, spec, tau.reshape(-1), x_rep).reshape(x.shape[0], order, x.shape[1])
    return 0.5 * np.einsum('j,njd->nd', weights, eps)


def _first_interval_mean(gm, spec, right, x, order=None):
    """Mean of eps over [0, right] where sigma ~ sqrt(tau).

    Substituting tau = u^2 removes the square-root endpoint behaviour; the
    remaining integral is done adaptively, or by fixed Gauss-Legendre when
    ``order`` is given.
    """
    u_max = math.sqrt(right)
    shape = x.shape

    def integrand(u):
        return (2.0 * u * eps_optimal(gm, spec, u * u, x)).reshape(-1)

    if order is None:
        value, _ = quad_vec(integrand, 0.0, u_max, epsabs=FIRST_INTERVAL_TOL, epsrel=FIRST_INTERVAL_TOL,
                            norm='max', limit=2000)
    else:
        nodes, weights = _leggauss(order)
        half = 0.5 * u_max
        value = half * sum(w * integrand(half * (u + 1.0)) for u, w in zip(nodes, weights))
    return value.reshape(shape) / right


def _interval_means(gm, spec, part, idx, x, order):
    out = np.empty_like(x)
    b = part.boundaries
    first = idx == 0
    if np.any(first):
        out[first] = _first_interval_mean(gm, spec, b[1], x[first])
    rest = ~first
    if np.any(rest):
        i_rest = idx[rest]
        if np.all(i_rest == i_rest[0]):
            out[rest] = _gl_mean_shared_interval(gm, spec, b[i_rest[0]], b[i_rest[0] + 1], x[rest], order)
        else:
            out[rest] = _gl_mean_per_row(gm, spec, b[i_rest], b[i_rest + 1], x[rest], order)
    return out


def _cross_check(gm, spec, part, idx, x, value, order):
    b = part.boundaries
    check = np.empty_like(x)
    first = idx == 0
    if np.any(first):
        check[first] = _first_interval_mean(gm, spec, b[1], x[first], order=2 * order)
    rest = ~first
    if np.any(rest):
        check[rest] = _gl_mean_per_row(gm, spec, b[idx[rest]], b[idx[rest] + 1], x[rest], 2 * order)
    scale = max(float(np.max(np.abs(check))), 1e-300)
    rel = float(np.max(np.abs(check - value))) / scale
    if rel > 1e-8:
        logger.warning('shared eps quadrature disagrees with order %d by %.3g (relative)', 2 * order, rel)
    return rel


def shared_optimal_eps(gm, spec, part, x, t, order=MIN_QUADRATURE_ORDER, cross_check=False):
    """Optimal shared predictor: the mean of eps(x, tau) over tau ~ U(t_{i-1}, t_i).

    Rows with t >= t_tilde fall back to the unshared optimum.
    """
    _check_order(order)
    x, single = _as_batch(gm, x)
    t_rows = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)) if np.ndim(t) == 0 \
        else np.asarray(t, dtype=np.float64).reshape(-1)
    out = np.empty_like(x)
    shared = t_rows < part.t_tilde
    if np.any(~shared):
        tail_t = t_rows[~shared]
        out[~shared] = eps_optimal(gm, spec, tail_t if np.ndim(t) else float(t), x[~shared])
    if np.any(shared):
        idx = part.interval_index(t_rows[shared])
        out[shared] = _interval_means(gm, spec, part, idx, x[shared], order)
        if cross_check:
            _cross_check(gm, spec, part, idx, x[shared], out[shared], order)
    return out[0] if single else out


class SharedAnalytic(Predictor):
    tag = PredictorTag.SHARED_ANALYTIC
    shares_conditions = True

    def __init__(self, gm, spec, part, order=MIN_QUADRATURE_ORDER):
        _check_order(order)
        self.gm = gm
        self.spec = spec
        self.part = part
        self.order = order

    def predict(self, x, t):
        return shared_optimal_eps(self.gm, self.spec, self.part, x, t, order=self.order)


# --- error bound ------------------------------------------------------------------

@dataclass
class BoundRecord:
    K_x: float
    B_x: float
    delta_sigma_max: float
    bound: float
    max_actual_error: float
    dominated: bool
    analytic_bound: float = None
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _dense_grid(part, points_per_interval):
    b = part.boundaries
    frac = np.arange(points_per_interval, dtype=np.float64) / points_per_interval
    return (b[:-1, None] + (b[1:] - b[:-1])[:, None] * frac[None, :]).reshape(-1)


def _errors_on_grid(gm, spec, part, x, points_per_interval, order):
    """Score and actual shared-vs-exact error along the dense grid of [0, t_tilde) for one x"""
    grid = _dense_grid(part, points_per_interval)
    x_rep = np.tile(x, (grid.shape[0], 1))
    h = -score(gm, spec, grid, x_rep)
    eps = np.asarray(se.sigma(spec, grid))[:, None] * h
    idx = np.arange(part.n)
    shared = _interval_means(gm, spec, part, idx, np.tile(x, (part.n, 1)), order)
    actual = np.linalg.norm(np.repeat(shared, points_per_interval, axis=0) - eps, axis=1)
    return grid, h, actual


def delta_sigma_max(spec, part):
    return float(np.max(np.abs(np.diff(np.asarray(se.sigma(spec, part.boundaries))))))


def shared_error_bound(gm, spec, part, x, points_per_interval=2048, order=MIN_QUADRATURE_ORDER, strict=False):
    """Check ||eps*(x, f_T(t)) - eps(x, t)|| <= sigma(t~) K(x) dt + B(x) dsigma_max on a dense grid.

    K(x) and B(x) are suprema over the grid, i.e. lower bounds of the true
    suprema. For standard-normal data the closed forms K = 0, B = ||x|| are
    reported as ``analytic_bound`` as well.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    grid, h, actual = _errors_on_grid(gm, spec, part, x, points_per_interval, order)
    steps = np.diff(grid)
    K_x = float(np.max(np.linalg.norm(np.diff(h, axis=0), axis=1) / steps)) if grid.size > 1 else 0.0
    B_x = float(np.max(np.linalg.norm(h, axis=1)))
    dsm = delta_sigma_max(spec, part)
    bound = se.sigma(spec, part.t_tilde) * K_x * part.delta_t + B_x * dsm
    max_actual = float(np.max(actual))
    analytic = float(np.linalg.norm(x) * dsm) if gm.is_standard_normal else None
    record = BoundRecord(
        K_x=K_x,
        B_x=B_x,
        delta_sigma_max=dsm,
        bound=float(bound),
        max_actual_error=max_actual,
        dominated=max_actual <= bound * (1.0 + 1e-9) + 1e-15,
        analytic_bound=analytic,
        grid={'t_tilde': part.t_tilde, 'n': part.n, 'points_per_interval': points_per_interval,
              'order': order, 'sup_is_grid_lower_bound': True},
    )
    if not record.dominated:
        logger.error('error bound violated: actual %.6g > bound %.6g (x=%s)', max_actual, bound, x.tolist())
        if strict:
            raise BoundViolationError(f'actual error {max_actual:.6g} exceeds bound {bound:.6g}')
    return record


@dataclass
class ConvergenceRecord:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    residual_rms: float
    n_values: list
    delta_t: list
    max_errors: list
    delta_sigma_over_sqrt_dt: list
    sqrt_dt_limit: float

    def to_dict(self):
        return asdict(self)


def convergence_order(gm, spec, t_tilde, n_values, x_set, points_per_interval=64, order=MIN_QUADRATURE_ORDER):
    """Log-log slope of the max shared-vs-exact error against dt = t_tilde / n"""
    n_values = sorted({int(n) for n in n_values})
    if len(n_values) < 2 or n_values[-1] / n_values[0] < 100:
        raise InsufficientRangeError('n_values must span at least two decades')
    x_set = np.atleast_2d(np.asarray(x_set, dtype=np.float64))
    delta_t, max_errors, ratios = [], [], []
    for n in n_values:
        part = PartitionSchedule(t_tilde, n)
        worst = 0.0
        for x in x_set:
            _, _, actual = _errors_on_grid(gm, spec, part, x, points_per_interval, order)
            worst = max(worst, float(np.max(actual)))
        delta_t.append(part.delta_t)
        max_errors.append(worst)
        ratios.append(delta_sigma_max(spec, part) / math.sqrt(part.delta_t))
        logger.debug('n=%d dt=%.4g max error %.4g', n, part.delta_t, worst)
    log_dt, log_err = np.log(delta_t), np.log(max_errors)
    fit = linregress(log_dt, log_err)
    residuals = log_err - (fit.intercept + fit.slope * log_dt)
    return ConvergenceRecord(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_stderr=float(fit.stderr),
        r_squared=float(fit.rvalue ** 2),
        residual_rms=float(np.sqrt(np.mean(residuals ** 2))),
        n_values=n_values,
        delta_t=delta_t,
        max_errors=max_errors,
        delta_sigma_over_sqrt_dt=ratios,
        sqrt_dt_limit=math.sqrt(max(-2.0 * se.dalpha_dt(spec, 0.0), 0.0)),
    )
