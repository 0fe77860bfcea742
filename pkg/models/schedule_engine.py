# models/schedule_engine.py - Continuous-time noise schedules and their calculus
import logging
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from utils.errors import DomainError, SingularityError, UnsupportedScheduleError

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi


class ScheduleKind(str, Enum):
    LINEAR = 'linear'
    QUADRATIC = 'quadratic'
    COSINE = 'cosine'
    COSINE_SHIFT = 'cosine_shift'
    ZERO_TERMINAL_SNR = 'zero_terminal_snr'


BETA_KINDS = (ScheduleKind.LINEAR, ScheduleKind.QUADRATIC)
COSINE_KINDS = (ScheduleKind.COSINE, ScheduleKind.COSINE_SHIFT)


@dataclass(frozen=True)
class ScheduleSpec:
    """A noise schedule: family plus parameters, evaluated in continuous time tau in [0, 1].

    Linear and quadratic schedules are parameterized by the continuous limits
    beta_min_bar / beta_max_bar of the discrete beta sequence (beta_bar_t = T * beta_t),
    so alpha(tau) = exp(-1/2 * integral_0^tau beta(s) ds). Cosine schedules define alpha
    directly. ``T`` is only used by discrete-time views.
    """
    kind: ScheduleKind = ScheduleKind.LINEAR
    beta_min_bar: float = 0.1
    beta_max_bar: float = 20.0
    cosine_offset: float = 0.008
    shift_factor: float = 0.25
    modified_ns: bool = False
    T: int = 1000

    def __post_init__(self):
        object.__setattr__(self, 'kind', ScheduleKind(self.kind))
        if self.T < 1:
            raise DomainError(f'T must be a positive integer, got {self.T}')
        if self.kind in BETA_KINDS or self.kind == ScheduleKind.ZERO_TERMINAL_SNR:
            if self.beta_min_bar < 0 or self.beta_max_bar <= 0:
                raise DomainError('beta_min_bar must be >= 0 and beta_max_bar > 0')
            if not self.modified_ns and not 0 < self.beta_min_bar <= self.beta_max_bar:
                raise DomainError(
                    f'need 0 < beta_min_bar <= beta_max_bar, got {self.beta_min_bar}, {self.beta_max_bar}'
                )
        if self.cosine_offset < 0:
            raise DomainError('cosine_offset must be nonnegative')
        if self.shift_factor <= 0:
            raise DomainError('shift_factor must be positive')
        if self.modified_ns and self.kind not in BETA_KINDS + (ScheduleKind.COSINE,):
            raise UnsupportedScheduleError(f'Modified-NS is not defined for {self.kind.value}')

    @classmethod
    def from_config(cls, cfg):
        return cls(
            kind=ScheduleKind(cfg['SCHEDULE_KIND']),
            beta_min_bar=float(cfg['BETA_MIN_BAR']),
            beta_max_bar=float(cfg['BETA_MAX_BAR']),
            cosine_offset=float(cfg['COSINE_OFFSET']),
            shift_factor=float(cfg['SHIFT_FACTOR']),
            modified_ns=bool(cfg['MODIFIED_NS']),
            T=int(cfg['NUM_TIMESTEPS']),
        )

    def to_config(self):
        data = asdict(self)
        return {
            'SCHEDULE_KIND': self.kind.value,
            'BETA_MIN_BAR': data['beta_min_bar'],
            'BETA_MAX_BAR': data['beta_max_bar'],
            'COSINE_OFFSET': data['cosine_offset'],
            'SHIFT_FACTOR': data['shift_factor'],
            'MODIFIED_NS': data['modified_ns'],
            'NUM_TIMESTEPS': data['T'],
        }


def _check_tau(tau, low=0.0, high=1.0):
    arr = np.asarray(tau, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < low) or np.any(arr > high):
        raise DomainError(f'tau must lie in [{low}, {high}]')
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _needs_repair(spec):
    if spec.kind in BETA_KINDS:
        return spec.beta_min_bar != 0.0
    if spec.kind == ScheduleKind.COSINE:
        return spec.cosine_offset != 0.0
    return False


@lru_cache(maxsize=256)
def _effective(spec):
    # a spec flagged modified_ns but still carrying the original parameters is repaired lazily
    if spec.modified_ns and _needs_repair(spec):
        return apply_modified_ns(replace(spec, modified_ns=False))
    return spec


# --- beta-integral families -------------------------------------------------

def _quadratic_coeffs(spec):
    a = math.sqrt(spec.beta_min_bar)
    return a, math.sqrt(spec.beta_max_bar) - a


def _beta(spec, tau):
    if spec.kind == ScheduleKind.QUADRATIC:
        a, b = _quadratic_coeffs(spec)
        return (a + b * tau) ** 2
    return spec.beta_min_bar + (spec.beta_max_bar - spec.beta_min_bar) * tau


def _dbeta0(spec):
    if spec.kind == ScheduleKind.QUADRATIC:
        a, b = _quadratic_coeffs(spec)
        return 2.0 * a * b
    return spec.beta_max_bar - spec.beta_min_bar


def _integral_beta(spec, tau):
    """Closed-form antiderivative of beta on [0, tau]"""
    if spec.kind == ScheduleKind.QUADRATIC:
        a, b = _quadratic_coeffs(spec)
        return a * a * tau + a * b * tau ** 2 + b * b * tau ** 3 / 3.0
    return spec.beta_min_bar * tau + 0.5 * (spec.beta_max_bar - spec.beta_min_bar) * tau ** 2


def _linear_base(spec):
    return replace(spec, kind=ScheduleKind.LINEAR, modified_ns=False)


# --- cosine family ----------------------------------------------------------

def _cosine_angles(spec, tau):
    s = spec.cosine_offset
    return (tau + s) / (1.0 + s) * HALF_PI, s / (1.0 + s) * HALF_PI


def _cosine_alpha(spec, tau):
    a, c = _cosine_angles(spec, tau)
    return np.clip(np.cos(a) / math.cos(c), 0.0, 1.0)


def _cosine_sigma_sq(spec, tau):
    a, c = _cosine_angles(spec, tau)
    return np.clip(np.sin(a - c) * np.sin(a + c) / math.cos(c) ** 2, 0.0, 1.0)


def _cosine_dalpha(spec, tau):
    a, c = _cosine_angles(spec, tau)
    return -HALF_PI / (1.0 + spec.cosine_offset) * np.sin(a) / math.cos(c)


def _shift_denominator(spec, alpha_c):
    k = spec.shift_factor
    return np.sqrt((k * k - 1.0) * alpha_c ** 2 + 1.0)


# --- public operations ------------------------------------------------------

def alpha(spec, tau):
    """Signal coefficient alpha(tau)"""
    tau = _check_tau(tau)
    spec = _effective(spec)
    if spec.kind in BETA_KINDS:
        out = np.exp(-0.5 * _integral_beta(spec, tau))
    elif spec.kind == ScheduleKind.COSINE:
        out = _cosine_alpha(spec, tau)
    elif spec.kind == ScheduleKind.COSINE_SHIFT:
        alpha_c = _cosine_alpha(spec, tau)
        out = spec.shift_factor * alpha_c / _shift_denominator(spec, alpha_c)
    else:
        base = _linear_base(spec)
        a1 = math.exp(-0.5 * _integral_beta(base, 1.0))
        out = (np.exp(-0.5 * _integral_beta(base, tau)) - a1) / (1.0 - a1)
    return _out(out)


def _sigma_sq(spec, tau):
    if spec.kind in BETA_KINDS:
        return -np.expm1(-_integral_beta(spec, tau))
    if spec.kind == ScheduleKind.COSINE:
        return _cosine_sigma_sq(spec, tau)
    if spec.kind == ScheduleKind.COSINE_SHIFT:
        alpha_c = _cosine_alpha(spec, tau)
        return _cosine_sigma_sq(spec, tau) / _shift_denominator(spec, alpha_c) ** 2
    base = _linear_base(spec)
    a1 = math.exp(-0.5 * _integral_beta(base, 1.0))
    one_minus = -np.expm1(-0.5 * _integral_beta(base, tau)) / (1.0 - a1)
    return np.clip(one_minus * (2.0 - one_minus), 0.0, 1.0)


def sigma(spec, tau):
    """Noise coefficient sqrt(1 - alpha^2), evaluated without cancellation near tau = 0"""
    tau = _check_tau(tau)
    return _out(np.sqrt(_sigma_sq(_effective(spec), tau)))


def dalpha_dt(spec, tau):
    tau = _check_tau(tau)
    spec = _effective(spec)
    if spec.kind in BETA_KINDS:
        out = -0.5 * _beta(spec, tau) * np.exp(-0.5 * _integral_beta(spec, tau))
    elif spec.kind == ScheduleKind.COSINE:
        out = _cosine_dalpha(spec, tau)
    elif spec.kind == ScheduleKind.COSINE_SHIFT:
        alpha_c = _cosine_alpha(spec, tau)
        out = spec.shift_factor * _cosine_dalpha(spec, tau) / _shift_denominator(spec, alpha_c) ** 3
    else:
        base = _linear_base(spec)
        a1 = math.exp(-0.5 * _integral_beta(base, 1.0))
        out = -0.5 * _beta(base, tau) * np.exp(-0.5 * _integral_beta(base, tau)) / (1.0 - a1)
    return _out(out)


def _d2alpha_at_zero(spec):
    """Second derivative of alpha at tau = 0, used for the regular limit of dsigma/dtau"""
    if spec.kind in BETA_KINDS:
        beta0 = _beta(spec, 0.0)
        return -0.5 * _dbeta0(spec) + 0.25 * beta0 * beta0
    if spec.kind == ScheduleKind.ZERO_TERMINAL_SNR:
        base = _linear_base(spec)
        a1 = math.exp(-0.5 * _integral_beta(base, 1.0))
        beta0 = _beta(base, 0.0)
        return (-0.5 * _dbeta0(base) + 0.25 * beta0 * beta0) / (1.0 - a1)
    a, c = _cosine_angles(spec, 0.0)
    rate = HALF_PI / (1.0 + spec.cosine_offset)
    alpha_c0 = math.cos(a) / math.cos(c)
    d1 = -rate * math.sin(a) / math.cos(c)
    d2 = -rate * rate * alpha_c0
    if spec.kind == ScheduleKind.COSINE:
        return d2
    k = spec.shift_factor
    den = math.sqrt((k * k - 1.0) * alpha_c0 ** 2 + 1.0)
    return k * d2 / den ** 3 - 3.0 * k * d1 * d1 * (k * k - 1.0) * alpha_c0 / den ** 5


def dsigma_dt(spec, tau):
    """dsigma/dtau = -(alpha / sigma) dalpha/dtau.

    At tau = 0 the expression is 0/0. When dalpha/dtau at 0 is non-zero the
    derivative diverges and SingularityError is raised; otherwise the analytic
    limit sqrt(-d2alpha/dtau2 at 0) is returned.
    """
    tau = _check_tau(tau)
    spec = _effective(spec)
    tau_arr = np.atleast_1d(tau)
    at_zero = tau_arr == 0.0
    out = np.empty_like(tau_arr)
    if np.any(at_zero):
        dalpha0 = dalpha_dt(spec, 0.0)
        if dalpha0 != 0.0:
            raise SingularityError(0.0, dalpha0)
        out[at_zero] = math.sqrt(max(-_d2alpha_at_zero(spec), 0.0))
    rest = ~at_zero
    if np.any(rest):
        t = tau_arr[rest]
        out[rest] = -np.asarray(alpha(spec, t)) * np.asarray(dalpha_dt(spec, t)) / np.sqrt(_sigma_sq(spec, t))
    return _out(out.reshape(np.shape(tau)))


def snr(spec, tau):
    """alpha^2 / sigma^2; +inf where sigma = 0"""
    tau = _check_tau(tau)
    spec = _effective(spec)
    a_sq = np.asarray(alpha(spec, tau)) ** 2
    s_sq = np.asarray(_sigma_sq(spec, tau))
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(s_sq > 0.0, a_sq / np.where(s_sq > 0.0, s_sq, 1.0), np.inf)
    return _out(out)


def lambda_(spec, tau):
    """Half log-SNR, log(alpha / sigma)"""
    with np.errstate(divide='ignore'):
        return _out(0.5 * np.log(np.asarray(snr(spec, tau))))


def tau_from_lambda(spec, lam, tau_min=1e-10, tau_max=1.0 - 1e-12):
    """Invert the strictly decreasing half log-SNR by bracketing root search"""
    hi_lam = lambda_(spec, tau_min)
    lo_lam = lambda_(spec, tau_max)
    if lam >= hi_lam:
        return tau_min
    if lam <= lo_lam:
        return tau_max
    return brentq(lambda t: lambda_(spec, t) - lam, tau_min, tau_max,
                  xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def sde_coeffs(spec, tau):
    """Drift f = dlog(alpha)/dtau and squared diffusion g^2 of the forward SDE.

    The quoted g(t) = 2 sigma^2 dlog(sigma/alpha)/dt is a squared diffusion; for
    variance-preserving schedules it equals -2 dalpha/dtau / alpha, which is the
    form evaluated here (finite at tau = 0).
    """
    tau = _check_tau(tau)
    a = np.asarray(alpha(spec, tau))
    if np.any(a <= 0.0):
        raise DomainError('sde_coeffs requires alpha(tau) > 0')
    drift = np.asarray(dalpha_dt(spec, tau)) / a
    return _out(drift), _out(-2.0 * drift)


def discrete_betas(spec):
    """Discrete beta_1..beta_T of the linear / quadratic DDPM schedules"""
    spec = _effective(spec)
    if spec.kind not in BETA_KINDS:
        raise UnsupportedScheduleError(f'{spec.kind.value} defines alpha directly; no beta sequence')
    if spec.T < 2:
        raise DomainError('discrete_betas needs T >= 2')
    T = spec.T
    frac = np.arange(T, dtype=np.float64) / (T - 1)
    lo, hi = spec.beta_min_bar / T, spec.beta_max_bar / T
    if spec.kind == ScheduleKind.LINEAR:
        return lo + (hi - lo) * frac
    return (math.sqrt(lo) + (math.sqrt(hi) - math.sqrt(lo)) * frac) ** 2


def discrete_alphas(spec):
    """alpha at tau = t/T for t = 0..T (alpha_0 = 1)"""
    return np.asarray(alpha(spec, np.arange(spec.T + 1, dtype=np.float64) / spec.T))


def terminal_snr(spec):
    return snr(spec, 1.0)


def apply_modified_ns(spec):
    """Repair a schedule so that dalpha/dtau vanishes at tau = 0.

    Linear: beta(0) = 0. Quadratic: beta(0) = 0 and beta_max_bar raised until the
    terminal SNR matches the original. Cosine: offset s = 0.
    """
    if spec.kind not in BETA_KINDS + (ScheduleKind.COSINE,):
        raise UnsupportedScheduleError(f'Modified-NS is not defined for {spec.kind.value}')
    if spec.modified_ns and not _needs_repair(spec):
        return spec
    if spec.kind == ScheduleKind.COSINE:
        return replace(spec, cosine_offset=0.0, modified_ns=True)
    if spec.kind == ScheduleKind.LINEAR:
        return replace(spec, beta_min_bar=0.0, modified_ns=True)

    original = replace(spec, modified_ns=False)
    target = math.log(terminal_snr(original))

    def mismatch(beta_max_bar):
        candidate = replace(spec, beta_min_bar=0.0, beta_max_bar=beta_max_bar, modified_ns=True)
        return math.log(terminal_snr(candidate)) - target

    upper = spec.beta_max_bar * 2.0
    while mismatch(upper) > 0.0:
        upper *= 2.0
    beta_max_bar = brentq(mismatch, spec.beta_max_bar, upper, xtol=1e-12)
    logger.debug('Modified-NS quadratic: beta_max_bar %.6g -> %.6g', spec.beta_max_bar, beta_max_bar)
    return replace(spec, beta_min_bar=0.0, beta_max_bar=beta_max_bar, modified_ns=True)
