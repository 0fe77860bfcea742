# tests/test_schedule_engine.py - Schedule calculus
import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from models import schedule_engine as se
from models.schedule_engine import ScheduleKind, ScheduleSpec
from utils.errors import DomainError, SingularityError, UnsupportedScheduleError

DEFAULT_KINDS = [ScheduleKind.LINEAR, ScheduleKind.QUADRATIC, ScheduleKind.COSINE]
ALL_KINDS = DEFAULT_KINDS + [ScheduleKind.COSINE_SHIFT, ScheduleKind.ZERO_TERMINAL_SNR]


@pytest.mark.parametrize('kind', ALL_KINDS)
def test_variance_preserving(kind):
    spec = ScheduleSpec(kind)
    tau = np.linspace(0.0, 1.0, 1001)
    a, s = se.alpha(spec, tau), se.sigma(spec, tau)
    assert_allclose(a ** 2 + s ** 2, 1.0, atol=1e-12)
    assert np.all(np.diff(a) < 0)


@pytest.mark.parametrize('kind', DEFAULT_KINDS)
def test_dalpha_matches_finite_differences(kind):
    spec = ScheduleSpec(kind)
    tau = np.linspace(0.01, 0.99, 99)
    h = 1e-6
    fd = (se.alpha(spec, tau + h) - se.alpha(spec, tau - h)) / (2 * h)
    assert_allclose(se.dalpha_dt(spec, tau), fd, rtol=1e-6)


@pytest.mark.parametrize('kind', [ScheduleKind.LINEAR, ScheduleKind.QUADRATIC])
def test_dalpha_at_zero_beta_families(kind):
    spec = ScheduleSpec(kind)
    assert se.dalpha_dt(spec, 0.0) == pytest.approx(-spec.beta_min_bar / 2, abs=1e-10)


def test_dalpha_at_zero_cosine(cosine):
    s = cosine.cosine_offset
    expected = -(math.pi / 2) / (1 + s) * math.tan(s / (1 + s) * math.pi / 2)
    assert se.dalpha_dt(cosine, 0.0) == pytest.approx(expected, abs=1e-10)
    assert se.dalpha_dt(cosine, 0.0) < 0


@pytest.mark.parametrize('kind', DEFAULT_KINDS)
def test_modified_ns_removes_the_slope_at_zero(kind):
    repaired = se.apply_modified_ns(ScheduleSpec(kind))
    assert repaired.modified_ns
    assert abs(se.dalpha_dt(repaired, 0.0)) <= 1e-12


def test_modified_ns_quadratic_keeps_terminal_snr(quadratic):
    repaired = se.apply_modified_ns(quadratic)
    ratio = se.terminal_snr(repaired) / se.terminal_snr(quadratic)
    assert 0.99 <= ratio <= 1.01
    assert repaired.beta_max_bar > quadratic.beta_max_bar


def test_modified_ns_flag_repairs_lazily(linear):
    flagged = replace(linear, modified_ns=True)
    assert se.dalpha_dt(flagged, 0.0) == 0.0
    assert se.alpha(flagged, 0.3) == pytest.approx(se.alpha(se.apply_modified_ns(linear), 0.3))


def test_modified_ns_is_idempotent(linear):
    once = se.apply_modified_ns(linear)
    assert se.apply_modified_ns(once) == once


def test_modified_ns_unsupported_for_shifted_cosine():
    with pytest.raises(UnsupportedScheduleError):
        se.apply_modified_ns(ScheduleSpec(ScheduleKind.COSINE_SHIFT))
    with pytest.raises(UnsupportedScheduleError):
        ScheduleSpec(ScheduleKind.ZERO_TERMINAL_SNR, modified_ns=True)


@pytest.mark.parametrize('kind', DEFAULT_KINDS)
def test_dsigma_diverges_only_for_singular_schedules(kind):
    spec = ScheduleSpec(kind)
    values = [se.dsigma_dt(spec, 10.0 ** -k) for k in range(2, 7)]
    assert all(b > a for a, b in zip(values, values[1:]))

    repaired = se.apply_modified_ns(spec)
    values = [se.dsigma_dt(repaired, 10.0 ** -k) for k in range(2, 7)]
    assert max(values) <= 10 * se.dsigma_dt(repaired, 1e-2)


def test_dsigma_at_zero(linear, cosine):
    with pytest.raises(SingularityError) as info:
        se.dsigma_dt(linear, 0.0)
    assert info.value.dalpha0 == pytest.approx(-0.05)

    flat = se.apply_modified_ns(cosine)
    assert se.dsigma_dt(flat, 0.0) == pytest.approx(math.pi / 2)
    assert se.dsigma_dt(flat, 1e-6) == pytest.approx(math.pi / 2, rel=1e-4)


def test_discrete_betas_match_continuous_alpha():
    spec = ScheduleSpec(ScheduleKind.LINEAR, T=10000)
    betas = se.discrete_betas(spec)
    assert betas.shape == (10000,)
    products = np.cumprod(np.sqrt(1.0 - betas))
    tau = np.arange(1, 10001) / 10000
    assert np.max(np.abs(products - se.alpha(spec, tau))) <= 1e-3


def test_discrete_betas_rejects_cosine(cosine):
    with pytest.raises(UnsupportedScheduleError):
        se.discrete_betas(cosine)


def test_discrete_alphas_start_at_one(linear):
    alphas = se.discrete_alphas(linear)
    assert alphas.shape == (linear.T + 1,)
    assert alphas[0] == 1.0


def test_zero_terminal_snr_reaches_zero():
    spec = ScheduleSpec(ScheduleKind.ZERO_TERMINAL_SNR)
    assert se.alpha(spec, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert se.terminal_snr(spec) == pytest.approx(0.0, abs=1e-20)


def test_lambda_round_trip(linear):
    for tau in (1e-3, 0.05, 0.4, 0.9):
        lam = se.lambda_(linear, tau)
        assert se.tau_from_lambda(linear, lam) == pytest.approx(tau, rel=1e-9)


@pytest.mark.parametrize('kind', DEFAULT_KINDS)
def test_tau_from_lambda_inside_bracket(kind):
    spec = ScheduleSpec(kind)
    for tau in np.linspace(0.01, 0.99, 25):
        assert se.tau_from_lambda(spec, se.lambda_(spec, tau)) == pytest.approx(tau, rel=1e-9)


def test_snr_is_infinite_at_zero(linear):
    assert se.snr(linear, 0.0) == math.inf


def test_sde_coeffs(linear):
    f, g_sq = se.sde_coeffs(linear, 0.0)
    assert f == pytest.approx(-0.05)
    assert g_sq == pytest.approx(0.1)
    f, g_sq = se.sde_coeffs(linear, 0.5)
    assert g_sq == pytest.approx(linear.beta_min_bar + 0.5 * (linear.beta_max_bar - linear.beta_min_bar))


@pytest.mark.parametrize('tau', [-0.1, 1.5, float('nan')])
def test_tau_outside_unit_interval(linear, tau):
    with pytest.raises(DomainError):
        se.alpha(linear, tau)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        ScheduleSpec(ScheduleKind.LINEAR, beta_min_bar=30.0, beta_max_bar=20.0)
    with pytest.raises(DomainError):
        ScheduleSpec(ScheduleKind.LINEAR, beta_min_bar=0.0)
    with pytest.raises(DomainError):
        ScheduleSpec(ScheduleKind.LINEAR, T=0)


def test_config_round_trip(quadratic):
    assert ScheduleSpec.from_config(quadratic.to_config()) == quadratic
