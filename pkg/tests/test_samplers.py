# tests/test_samplers.py - Reverse samplers, forward simulation and partition plumbing
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from models import schedule_engine as se
from models.analytic_process import AnalyticEps, Predictor, eps_optimal, sample_marginal, sample_mixture
from models.condition_sharing import PartitionSchedule, SharedAnalytic, shared_optimal_eps
from models.metrics import noise_floor, sliced_wasserstein
from models.samplers import (
    SamplerConfig,
    SamplerKind,
    ancestral_step,
    ddim_step,
    denoise,
    dpm_solver_step,
    forward_euler_step,
    nfe_used,
    reverse_sde_euler_step,
    sample,
    simulate_forward,
    step_count,
    time_grid,
)
from models.schedule_engine import ScheduleKind, ScheduleSpec
from utils.errors import ConfigError, DomainError, SamplingError
from utils.lanes import lane_rng


class RecordingPredictor(Predictor):
    """Exact predictor that remembers every condition it was queried at"""

    def __init__(self, gm, spec):
        self.inner = AnalyticEps(gm, spec)
        self.conditions = []

    def predict(self, x, t):
        self.conditions.extend(np.atleast_1d(np.asarray(t, dtype=np.float64)).tolist())
        return self.inner.predict(x, t)


class NanPredictor(Predictor):
    def predict(self, x, t):
        return np.full(np.shape(x), np.nan)


def exact(gm, n, seed=99):
    return sample_mixture(gm, n, lane_rng(seed, 'reference'))


def test_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig(kind=SamplerKind.DPM_SOLVER_3, nfe=2)
    with pytest.raises(ConfigError):
        SamplerConfig(kind=SamplerKind.DDIM, eta=-1.0)
    with pytest.raises(ConfigError):
        SamplerConfig(kind=SamplerKind.DDIM, grid='cubic')
    assert SamplerConfig(kind='dpm_solver2', nfe=2).order == 2


def test_nfe_accounting(linear, cosine):
    assert step_count(SamplerConfig(kind=SamplerKind.DDIM, nfe=50)) == 49
    assert nfe_used(SamplerConfig(kind=SamplerKind.DDIM, nfe=50), linear) == 50
    assert nfe_used(SamplerConfig(kind=SamplerKind.DPM_SOLVER_2, nfe=20), linear) == 19
    assert nfe_used(SamplerConfig(kind=SamplerKind.ANCESTRAL), linear) == 1000
    assert nfe_used(SamplerConfig(kind=SamplerKind.ANCESTRAL), cosine) == 999


def test_time_grid_endpoints(linear, cosine):
    grid = time_grid(linear, 10)
    assert grid.shape == (11,)
    assert grid[0] == 1.0 and grid[-1] == pytest.approx(1e-3)
    assert np.all(np.diff(grid) < 0)
    assert time_grid(cosine, 4)[0] == pytest.approx(1.0 - 1e-3)
    logsnr = time_grid(linear, 10, 'logsnr')
    assert_allclose(np.diff(se.lambda_(linear, logsnr)), np.diff(se.lambda_(linear, logsnr))[0], rtol=1e-6)


def test_ancestral_last_step_is_deterministic(standard_normal, linear, rng):
    pred = AnalyticEps(standard_normal, linear)
    x = rng.standard_normal((10, 2))
    out = ancestral_step(pred, linear, x, 1)
    assert np.all(np.isfinite(out))
    assert np.array_equal(out, ancestral_step(pred, linear, x, 1))
    with pytest.raises(DomainError):
        ancestral_step(pred, linear, x, 5)
    with pytest.raises(DomainError):
        ancestral_step(pred, linear, x, 0, rng=rng)


def test_reverse_sde_without_diffusion_is_a_drift_step(ring, linear, rng):
    pred = AnalyticEps(ring, linear)
    x = rng.standard_normal((8, 2))
    noise = rng.standard_normal((8, 2))
    out = reverse_sde_euler_step(pred, linear, x, 0.4, 0.01, noise, diffusion_sq=0.0)
    f, _ = se.sde_coeffs(linear, 0.4)
    assert_allclose(out, x - f * x * 0.01, rtol=1e-12)
    with pytest.raises(DomainError):
        reverse_sde_euler_step(pred, linear, x, 0.4, 0.0, noise)


def test_forward_euler_step_matches_sde(linear, rng):
    x = rng.standard_normal((4, 2))
    noise = rng.standard_normal((4, 2))
    f, g_sq = se.sde_coeffs(linear, 0.2)
    assert_allclose(forward_euler_step(linear, x, 0.2, 0.01, noise), x + f * x * 0.01 + np.sqrt(g_sq * 0.01) * noise)


@pytest.mark.parametrize('spec', [ScheduleSpec(ScheduleKind.LINEAR), ScheduleSpec(ScheduleKind.COSINE)])
def test_dpm_solver1_equals_ddim(ring, spec, rng):
    pred = AnalyticEps(ring, spec)
    for t_from, t_to in [(0.8, 0.3), (0.3, 0.1), (0.05, 0.002)]:
        x = rng.standard_normal((32, 2))
        assert_allclose(dpm_solver_step(1, pred, spec, x, t_from, t_to),
                        ddim_step(pred, spec, x, t_from, t_to), rtol=1e-12, atol=1e-12)


def test_step_rejects_times_below_floor(ring, linear, rng):
    pred = AnalyticEps(ring, linear)
    x = rng.standard_normal((2, 2))
    with pytest.raises(DomainError):
        ddim_step(pred, linear, x, 0.1, 1e-5)
    with pytest.raises(DomainError):
        dpm_solver_step(2, pred, linear, x, 0.1, 0.2)
    with pytest.raises(ConfigError):
        dpm_solver_step(4, pred, linear, x, 0.2, 0.1)


def test_higher_order_solvers_are_more_accurate(standard_normal, linear, rng):
    # the exact flow keeps standard-normal states fixed
    pred = AnalyticEps(standard_normal, linear)
    x = rng.standard_normal((16, 2))
    errors = [np.max(np.abs(dpm_solver_step(k, pred, linear, x, 0.5, 0.3) - x)) for k in (1, 2, 3)]
    assert errors[2] < errors[1] < errors[0]


def test_sample_is_deterministic(ring, linear):
    pred = AnalyticEps(ring, linear)
    config = SamplerConfig(kind=SamplerKind.DDIM, nfe=10, seed=7, eta=0.5, lanes=3)
    first = sample(pred, linear, config, 200, 2)
    second = sample(pred, linear, config, 200, 2)
    assert np.array_equal(first.samples, second.samples)
    assert first.samples.shape == (200, 2)
    assert first.nfe_used == 10
    assert first.config['kind'] == 'ddim'


def test_sample_snapshots(ring, linear):
    config = SamplerConfig(kind=SamplerKind.DDIM, nfe=9, lanes=2, record_every=4)
    record = sample(AnalyticEps(ring, linear), linear, config, 20, 2)
    assert len(record.snapshots) == 2
    assert all(states.shape == (20, 2) for _, states in record.snapshots)


def test_sample_reports_failing_step(linear):
    with pytest.raises(SamplingError) as info:
        sample(NanPredictor(), linear, SamplerConfig(kind=SamplerKind.DDIM, nfe=5), 4, 2)
    assert info.value.step == 1


def test_sample_rejects_forward_euler(ring, linear):
    with pytest.raises(ConfigError):
        sample(AnalyticEps(ring, linear), linear, SamplerConfig(kind=SamplerKind.FORWARD_EULER, nfe=5), 4, 2)


def test_sample_warns_about_terminal_signal(ring, caplog):
    spec = ScheduleSpec(ScheduleKind.LINEAR, beta_max_bar=2.0)
    with caplog.at_level(logging.WARNING, logger='models.samplers'):
        sample(AnalyticEps(ring, spec), spec, SamplerConfig(kind=SamplerKind.DDIM, nfe=3), 4, 2)
    assert 'does not match the terminal marginal' in caplog.text


@pytest.mark.parametrize('kind, nfe', [
    (SamplerKind.ANCESTRAL, 1000),
    (SamplerKind.REVERSE_SDE_EULER, 100),
    (SamplerKind.DDIM, 20),
    (SamplerKind.DPM_SOLVER_1, 5),
    (SamplerKind.DPM_SOLVER_2, 9),
    (SamplerKind.DPM_SOLVER_3, 10),
])
def test_partition_plumbing(ring, linear, partition, kind, nfe):
    pred = RecordingPredictor(ring, linear)
    config = SamplerConfig(kind=kind, nfe=nfe, partition=partition, lanes=1)
    sample(pred, linear, config, 8, 2)
    conditions = np.array(pred.conditions)
    below = conditions[conditions < partition.t_tilde]
    allowed = np.floor(partition.boundaries[:-1] * linear.T + 1e-9) / linear.T
    assert below.size > 0
    assert np.all(np.min(np.abs(below[:, None] - allowed[None, :]), axis=1) < 1e-12)


def test_shared_predictor_keeps_its_own_interval(ring, linear, rng):
    part = PartitionSchedule(0.1, 3)
    pred = SharedAnalytic(ring, linear, part)
    x = rng.standard_normal((4, 2))
    assert np.array_equal(denoise(pred, linear, x, 0.05, part), denoise(pred, linear, x, 0.05))
    eps = (x - se.alpha(linear, 0.05) * denoise(pred, linear, x, 0.05, part)) / se.sigma(linear, 0.05)
    assert_allclose(eps, shared_optimal_eps(ring, linear, part, x, 0.05), rtol=1e-9, atol=1e-12)


def test_forward_simulation_without_steps_returns_data(ring, linear):
    record = simulate_forward(ring, linear, 50, 0.0, 0, seed=3, lanes=1)
    assert np.array_equal(record.samples, sample_mixture(ring, 50, lane_rng(3, 'forward', 0)))


def test_forward_simulation_matches_marginal(ring, linear):
    record = simulate_forward(ring, linear, 4000, 0.5, 200, seed=1)
    reference = sample_marginal(ring, linear, 0.5, 4000, lane_rng(2, 'reference'))
    assert sliced_wasserstein(record.samples, reference, 64).value < 0.1


def test_forward_refinement_reduces_error(ring, linear):
    # the second moment of the simulated marginal converges to the exact one
    a, s = se.alpha(linear, 0.5), se.sigma(linear, 0.5)
    target = a * a * np.mean(np.sum(ring.means ** 2, axis=1) + 2 * 0.05 ** 2) + 2 * s * s
    errors = []
    for steps in (5, 20, 80):
        record = simulate_forward(ring, linear, 20000, 0.5, steps, seed=4)
        errors.append(abs(np.mean(np.sum(record.samples ** 2, axis=1)) - target))
    assert errors[2] < errors[0]


@pytest.mark.parametrize('kind, nfe', [
    (SamplerKind.DDIM, 50),
    (SamplerKind.DPM_SOLVER_2, 20),
    (SamplerKind.DPM_SOLVER_3, 20),
])
def test_fast_samplers_with_exact_predictor(standard_normal, linear, kind, nfe):
    record = sample(AnalyticEps(standard_normal, linear), linear, SamplerConfig(kind=kind, nfe=nfe), 4000, 2)
    assert sliced_wasserstein(record.samples, exact(standard_normal, 4000), 64).value < 0.1


@pytest.mark.slow
@pytest.mark.parametrize('gm_name, kind, nfe, grid, threshold', [
    ('standard_normal', SamplerKind.ANCESTRAL, 1000, 'uniform', 0.05),
    ('ring', SamplerKind.ANCESTRAL, 1000, 'uniform', 0.08),
    ('standard_normal', SamplerKind.REVERSE_SDE_EULER, 1000, 'uniform', 0.08),
    ('ring', SamplerKind.REVERSE_SDE_EULER, 1000, 'uniform', 0.1),
    ('standard_normal', SamplerKind.DDIM, 50, 'uniform', 0.06),
    ('ring', SamplerKind.DDIM, 50, 'uniform', 0.1),
    ('standard_normal', SamplerKind.DPM_SOLVER_2, 20, 'uniform', 0.08),
    ('standard_normal', SamplerKind.DPM_SOLVER_3, 20, 'uniform', 0.08),
    ('ring', SamplerKind.DPM_SOLVER_2, 20, 'logsnr', 0.1),
    ('ring', SamplerKind.DPM_SOLVER_3, 20, 'logsnr', 0.1),
])
def test_sampler_fidelity_acceptance(request, linear, gm_name, kind, nfe, grid, threshold):
    gm = request.getfixturevalue(gm_name)
    record = sample(AnalyticEps(gm, linear), linear, SamplerConfig(kind=kind, nfe=nfe, grid=grid), 10000, 2)
    swd = sliced_wasserstein(record.samples, exact(gm, 10000)).value
    floor = noise_floor(lambda rng, n: sample_mixture(gm, n, rng), 10000).value
    assert swd < threshold
    assert swd <= 2.0 * floor


@pytest.mark.slow
def test_reverse_sde_agrees_with_ancestral(standard_normal, linear):
    pred = AnalyticEps(standard_normal, linear)
    sde = sample(pred, linear, SamplerConfig(kind=SamplerKind.REVERSE_SDE_EULER, nfe=1000, seed=1), 10000, 2)
    ancestral = sample(pred, linear, SamplerConfig(kind=SamplerKind.ANCESTRAL, seed=2), 10000, 2)
    assert sliced_wasserstein(sde.samples, ancestral.samples).value < 0.05


@pytest.mark.slow
def test_forward_simulation_acceptance(ring, linear):
    record = simulate_forward(ring, linear, 10000, 0.5, 500, seed=1)
    reference = sample_marginal(ring, linear, 0.5, 10000, lane_rng(2, 'reference'))
    assert sliced_wasserstein(record.samples, reference).value < 0.08


def test_eps_optimal_is_used_for_exact_queries(ring, linear, rng):
    x = rng.standard_normal((3, 2))
    assert_allclose(AnalyticEps(ring, linear).predict(x, 0.2), eps_optimal(ring, linear, 0.2, x))
