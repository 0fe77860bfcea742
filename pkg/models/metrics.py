# models/metrics.py - Sliced-Wasserstein, Lipschitz summaries and SNR ratio curves
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import ks_2samp

from models import schedule_engine as se
from utils.errors import DegenerateInputError, DomainError
from utils.lanes import lane_rng

logger = logging.getLogger(__name__)

DEFAULT_PROJECTIONS = 128


@dataclass
class MetricReport:
    name: str
    value: float
    stderr: float
    sizes: tuple
    config_hash: str = None
    seed: int = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f'{self.name} is not finite')
        if self.stderr < 0:
            raise DomainError('stderr must be nonnegative')

    def to_dict(self):
        data = asdict(self)
        data['sizes'] = list(self.sizes)
        return data


def _projected_quantiles(proj, size):
    # proj: (n, P) -> (size, P) sorted values, interpolated when n != size
    if proj.shape[0] == size:
        return np.sort(proj, axis=0)
    levels = (np.arange(size) + 0.5) / size
    return np.quantile(proj, levels, axis=0)


def sliced_wasserstein(a, b, n_projections=DEFAULT_PROJECTIONS, seed=0, config_hash=None):
    """Mean over random unit directions of the 1-D 2-Wasserstein distance"""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DegenerateInputError('sliced Wasserstein needs non-empty sample sets')
    if a.shape[1] != b.shape[1]:
        raise DomainError(f'dimension mismatch: {a.shape[1]} vs {b.shape[1]}')
    if n_projections < 1:
        raise DomainError('n_projections must be at least 1')
    directions = lane_rng(seed, 'projections').standard_normal((a.shape[1], n_projections))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    size = max(a.shape[0], b.shape[0])
    qa = _projected_quantiles(a @ directions, size)
    qb = _projected_quantiles(b @ directions, size)
    per_projection = np.sqrt(np.mean((qa - qb) ** 2, axis=0))
    stderr = float(per_projection.std(ddof=1) / math.sqrt(n_projections)) if n_projections > 1 else 0.0
    return MetricReport(
        name='sliced_wasserstein',
        value=float(per_projection.mean()),
        stderr=stderr,
        sizes=(a.shape[0], b.shape[0]),
        config_hash=config_hash,
        seed=seed,
        extra={'n_projections': n_projections},
    )


def noise_floor(draw, n, n_projections=DEFAULT_PROJECTIONS, seed=0):
    """SWD between two independent exact sample sets of size n; draw(rng, n) -> samples"""
    first = draw(lane_rng(seed, 'noise_floor', 0), n)
    second = draw(lane_rng(seed, 'noise_floor', 1), n)
    report = sliced_wasserstein(first, second, n_projections, seed)
    report.name = 'swd_noise_floor'
    return report


# --- SNR curves -------------------------------------------------------------------------

@dataclass
class SnrRatioCurve:
    t: np.ndarray
    ratio: np.ndarray
    labels: tuple

    def rows(self):
        return [(float(t), float(r)) for t, r in zip(self.t, self.ratio)]


def snr_ratio_curve(spec_a, spec_b, grid):
    """Pointwise snr(a) / snr(b); NaN where snr(b) is zero or infinite"""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError('grid must be a non-empty 1-D array')
    snr_a = np.asarray(se.snr(spec_a, grid), dtype=np.float64)
    snr_b = np.asarray(se.snr(spec_b, grid), dtype=np.float64)
    bad = (snr_b == 0.0) | ~np.isfinite(snr_b) | ~np.isfinite(snr_a)
    if np.any(bad):
        logger.warning('snr ratio undefined at %d grid points', int(bad.sum()))
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(bad, np.nan, snr_a / np.where(bad, 1.0, snr_b))
    return SnrRatioCurve(grid, ratio, (spec_a.kind.value, spec_b.kind.value))


# --- Lipschitz curve aggregation -------------------------------------------------------------

@dataclass
class LipschitzSummary:
    label: str
    max: float
    argmax: float
    auc: float
    mean: float
    n_points: int

    def to_dict(self):
        return asdict(self)


def _summarize(curve, t_tilde):
    t = np.asarray(curve.t)
    k = np.asarray(curve.K)
    inside = t < t_tilde if t_tilde is not None else np.ones_like(t, dtype=bool)
    t_in, k_in = t[inside], k[inside]
    auc = float(trapezoid(k_in, t_in)) if t_in.size > 1 else 0.0
    i = int(np.argmax(k))
    return LipschitzSummary(curve.label, float(k[i]), float(t[i]), auc, float(k.mean()), int(t.size))


def lipschitz_report(curves, t_tilde=None):
    """Merge curves sharing one t grid; returns (header, rows, summaries).

    The AUC is taken over grid points below t_tilde (the whole grid when None).
    """
    if not curves:
        raise DegenerateInputError('lipschitz_report needs at least one curve')
    for curve in curves:
        if np.size(curve.t) == 0:
            raise DegenerateInputError(f'curve {curve.label!r} is empty')
    grid = np.asarray(curves[0].t)
    for curve in curves[1:]:
        if not np.array_equal(np.asarray(curve.t), grid):
            raise DomainError(f'grid mismatch between {curves[0].label!r} and {curve.label!r}')

    header = ['t']
    for curve in curves:
        header += [f'K_{curve.label}', f'stderr_{curve.label}']
    rows = []
    for i, t in enumerate(grid):
        row = [float(t)]
        for curve in curves:
            row += [float(curve.K[i]), float(curve.stderr[i])]
        rows.append(row)
    return header, rows, [_summarize(curve, t_tilde) for curve in curves]


# --- training diagnostics --------------------------------------------------------------------

def moving_average(values, window):
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise DomainError('window must be at least 1')
    if values.size < window:
        return np.array([])
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode='valid')


def is_non_increasing(values, window, tolerance=0.05):
    """True when consecutive non-overlapping window means never rise by more than tolerance (relative)"""
    values = np.asarray(values, dtype=np.float64)
    blocks = values.size // window
    if blocks < 2:
        return True
    means = values[:blocks * window].reshape(blocks, window).mean(axis=1)
    return bool(np.all(means[1:] <= means[:-1] * (1.0 + tolerance)))


def time_sampling_summary(times, spec, reference=None):
    """Median realized t and SNR, plus the KS statistic against reference times"""
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise DegenerateInputError('no realized times')
    summary = {
        'n': int(times.size),
        'median_t': float(np.median(times)),
        'median_snr': float(np.median(se.snr(spec, times))),
    }
    if reference is not None:
        result = ks_2samp(times, np.asarray(reference, dtype=np.float64))
        summary['ks_statistic'] = float(result.statistic)
        summary['ks_pvalue'] = float(result.pvalue)
    return summary


def perturbation_rows(curves):
    """Long-format rows (label, scale, error, stderr) for perturbation curves"""
    return [(curve.label, s, e, err) for curve in curves for s, e, err in curve.rows()]
