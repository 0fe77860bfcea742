# tests/test_metrics.py - Sliced-Wasserstein, SNR ratios and curve summaries
import numpy as np
import pytest
from numpy.testing import assert_allclose

from models import schedule_engine as se
from models.analytic_process import LipschitzCurve, PerturbationCurve
from models.metrics import (
    MetricReport,
    is_non_increasing,
    lipschitz_report,
    moving_average,
    noise_floor,
    perturbation_rows,
    sliced_wasserstein,
    snr_ratio_curve,
)
from utils.errors import DegenerateInputError, DomainError


def curve(label, t, K):
    t = np.asarray(t, dtype=np.float64)
    return LipschitzCurve(label, t, np.asarray(K, dtype=np.float64), np.zeros_like(t), 1e-6)


def test_swd_of_identical_sets_is_zero(rng):
    a = rng.standard_normal((500, 3))
    report = sliced_wasserstein(a, a.copy())
    assert report.value == 0.0
    assert report.sizes == (500, 500)


def test_swd_is_symmetric(rng):
    a = rng.standard_normal((300, 2))
    b = rng.standard_normal((300, 2)) + 0.3
    assert sliced_wasserstein(a, b).value == pytest.approx(sliced_wasserstein(b, a).value)


def test_swd_recovers_mean_shift_in_one_dimension(rng):
    a = rng.standard_normal((100000, 1))
    b = rng.standard_normal((100000, 1)) + 0.5
    assert sliced_wasserstein(a, b, 16).value == pytest.approx(0.5, abs=0.01)


def test_swd_handles_unequal_sizes(rng):
    a = rng.standard_normal((2000, 2))
    b = rng.standard_normal((500, 2))
    report = sliced_wasserstein(a, b)
    assert np.isfinite(report.value) and report.value < 0.2
    assert report.stderr >= 0


def test_swd_rejects_bad_input(rng):
    with pytest.raises(DegenerateInputError):
        sliced_wasserstein(np.empty((0, 2)), rng.standard_normal((5, 2)))
    with pytest.raises(DomainError):
        sliced_wasserstein(rng.standard_normal((5, 2)), rng.standard_normal((5, 3)))


def test_swd_projections_depend_on_seed_only(rng):
    a = rng.standard_normal((200, 2))
    b = rng.standard_normal((200, 2))
    assert sliced_wasserstein(a, b, seed=4).value == sliced_wasserstein(a, b, seed=4).value


def test_noise_floor_is_small_and_reproducible():
    def draw(rng, n):
        return rng.standard_normal((n, 2))

    first = noise_floor(draw, 5000, 32, seed=1)
    assert first.name == 'swd_noise_floor'
    assert 0 < first.value < 0.1
    assert first.value == noise_floor(draw, 5000, 32, seed=1).value


def test_metric_report_must_be_finite():
    with pytest.raises(DomainError):
        MetricReport('x', float('nan'), 0.0, (1, 1))
    with pytest.raises(DomainError):
        MetricReport('x', 1.0, -1.0, (1, 1))


def test_snr_ratio_of_schedule_with_itself(linear):
    grid = np.linspace(0.01, 0.99, 50)
    assert_allclose(snr_ratio_curve(linear, linear, grid).ratio, 1.0)


def test_snr_ratio_after_repair(linear, quadratic):
    grid = np.array([1e-3, 1.0])
    ratio = snr_ratio_curve(se.apply_modified_ns(linear), linear, grid).ratio
    assert ratio[0] > 5
    assert ratio[1] == pytest.approx(np.exp(0.05), rel=1e-3)
    terminal = snr_ratio_curve(se.apply_modified_ns(quadratic), quadratic, np.array([1.0])).ratio
    assert 0.99 <= terminal[0] <= 1.01


def test_snr_ratio_is_undefined_at_zero(linear):
    ratio = snr_ratio_curve(linear, linear, np.array([0.0, 0.5])).ratio
    assert np.isnan(ratio[0]) and ratio[1] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        snr_ratio_curve(linear, linear, np.array([]))


def test_lipschitz_report_merges_curves():
    t = [0.01, 0.05, 0.2]
    header, rows, summaries = lipschitz_report([curve('a', t, [3, 2, 1]), curve('b', t, [0, 0, 1])], t_tilde=0.1)
    assert header == ['t', 'K_a', 'stderr_a', 'K_b', 'stderr_b']
    assert rows[0] == [0.01, 3.0, 0.0, 0.0, 0.0]
    assert summaries[0].max == 3.0 and summaries[0].argmax == 0.01
    assert summaries[0].auc == pytest.approx(0.1)
    assert summaries[1].auc == 0.0


def test_lipschitz_report_single_point_has_no_area():
    _, _, summaries = lipschitz_report([curve('a', [0.1], [2.0])])
    assert summaries[0].auc == 0.0 and summaries[0].max == 2.0


def test_lipschitz_report_errors():
    with pytest.raises(DegenerateInputError):
        lipschitz_report([])
    with pytest.raises(DegenerateInputError):
        lipschitz_report([curve('a', [], [])])
    with pytest.raises(DomainError):
        lipschitz_report([curve('a', [0.1, 0.2], [1, 1]), curve('b', [0.1, 0.3], [1, 1])])


def test_moving_average():
    assert_allclose(moving_average([1, 2, 3, 4], 2), [1.5, 2.5, 3.5])
    assert moving_average([1, 2], 5).size == 0
    with pytest.raises(DomainError):
        moving_average([1, 2], 0)


def test_is_non_increasing():
    noisy_decay = np.exp(-np.arange(2000) / 500) + 0.01 * np.sin(np.arange(2000))
    assert is_non_increasing(noisy_decay, 500)
    assert not is_non_increasing(np.arange(2000, dtype=float), 500)
    assert is_non_increasing([5.0], 500)


def test_perturbation_rows():
    curves = [PerturbationCurve('p', np.array([0.0, 0.1]), np.array([0.0, 0.2]), np.array([0.0, 0.01]))]
    assert perturbation_rows(curves) == [('p', 0.0, 0.0, 0.0), ('p', 0.1, 0.2, 0.01)]
