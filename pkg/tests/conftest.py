# tests/conftest.py - Shared fixtures
import numpy as np
import pytest

from app import create_app
from models.analytic_process import GaussianMixture
from models.condition_sharing import PartitionSchedule
from models.schedule_engine import ScheduleKind, ScheduleSpec


@pytest.fixture
def linear():
    return ScheduleSpec(ScheduleKind.LINEAR)


@pytest.fixture
def quadratic():
    return ScheduleSpec(ScheduleKind.QUADRATIC)


@pytest.fixture
def cosine():
    return ScheduleSpec(ScheduleKind.COSINE)


@pytest.fixture
def standard_normal():
    return GaussianMixture.standard_normal(2)


@pytest.fixture
def ring():
    return GaussianMixture.ring()


@pytest.fixture
def partition():
    return PartitionSchedule(0.1, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def app():
    return create_app('testing')


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / 'out'
