# tests/test_utils.py - Validators, config precedence, lanes and output folders
import json
import os

import numpy as np
import pytest

from config import config as profiles
from utils.errors import ConfigError
from utils.file_handler import OutputFolder, load_config_file, read_csv
from utils.lanes import lane_draws, lane_rng, paginate_lanes
from utils.run_config import environment_values, manifest_config, resolve_config
from utils.validators import coerce_value, config_file_kind, validate_config, validate_required_fields


def profile(name='testing'):
    cls = profiles[name]
    return {k: getattr(cls, k) for k in dir(cls) if k.isupper()}


def test_coerce_values():
    assert coerce_value('nfe', '20') == 20
    assert coerce_value('MODIFIED_NS', 'yes') is True
    assert coerce_value('SCHEDULE_KIND', 'Cosine') == 'cosine'
    assert coerce_value('HIDDEN', '32, 32') == (32, 32)
    assert coerce_value('SEED', 2 ** 64 - 1) == 2 ** 64 - 1
    assert coerce_value('T_TILDE', None) is None


@pytest.mark.parametrize('key, value', [
    ('SCHEDULE_KIND', 'sigmoid'),
    ('NFE', '0'),
    ('NFE', 2.5),
    ('SEED', -1),
    ('MODIFIED_NS', 'maybe'),
    ('HIDDEN', ''),
    ('T_TILDE', 1.5),
    ('NOT_A_KEY', 1),
])
def test_coerce_rejects(key, value):
    with pytest.raises(ConfigError):
        coerce_value(key, value)


def test_validate_helpers():
    assert validate_config({'nfe': '3'}) == {'NFE': 3}
    assert validate_required_fields({'a': 1, 'b': ''}, ['a', 'b']) == 'Missing required fields: b'
    assert validate_required_fields({'a': 1}, ['a']) is None


@pytest.mark.parametrize('path, kind', [
    ('run.env', 'dotenv'),
    ('.env', 'dotenv'),
    ('runs/settings', 'dotenv'),
    ('profile.CFG', 'dotenv'),
    ('runs/first/manifest.json', 'json'),
])
def test_config_file_kind(path, kind):
    assert config_file_kind(path) == kind


def test_unsupported_config_file_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match='Unsupported config file type'):
        config_file_kind('run.yaml')
    path = tmp_path / 'run.yaml'
    path.write_text('NFE: 3\n')
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_precedence(tmp_path):
    config_file = tmp_path / 'run.env'
    config_file.write_text('NFE=30\nSEED=4\n')
    environ = {'LAB_NFE': '20', 'LAB_ETA': '0.5', 'UNRELATED': 'x'}

    cfg = resolve_config(profile(), environ={})
    assert cfg['NFE'] == profiles['testing'].NFE

    cfg = resolve_config(profile(), environ=environ)
    assert cfg['NFE'] == 20 and cfg['ETA'] == 0.5

    cfg = resolve_config(profile(), str(config_file), environ=environ)
    assert cfg['NFE'] == 30 and cfg['SEED'] == 4 and cfg['ETA'] == 0.5

    cfg = resolve_config(profile(), str(config_file), {'NFE': 40, 'SEED': None}, environ=environ)
    assert cfg['NFE'] == 40 and cfg['SEED'] == 4


def test_environment_values_filter_prefix():
    assert environment_values({'LAB_NFE': '3', 'LAB_BOGUS': '1', 'NFE': '9'}) == {'NFE': '3'}


def test_bad_environment_value_is_a_config_error():
    with pytest.raises(ConfigError):
        resolve_config(profile(), environ={'LAB_SCHEDULE_KIND': 'bogus'})


def test_manifest_json_as_config(tmp_path):
    cfg = resolve_config(profile(), environ={})
    manifest = tmp_path / 'manifest.json'
    manifest.write_text(json.dumps({'config': manifest_config(dict(cfg, NFE=7))}))
    loaded = resolve_config(profile(), str(manifest), environ={})
    assert loaded['NFE'] == 7
    assert loaded['HIDDEN'] == cfg['HIDDEN']


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / 'missing.env'))
    bad = tmp_path / 'run.yaml'
    bad.write_text('NFE: 3')
    with pytest.raises(ConfigError):
        load_config_file(str(bad))
    broken = tmp_path / 'run.json'
    broken.write_text('{')
    with pytest.raises(ConfigError):
        load_config_file(str(broken))


def test_paginate_lanes():
    assert paginate_lanes(10, 4) == [(0, 3), (3, 6), (6, 9), (9, 10)]
    assert paginate_lanes(2, 4) == [(0, 1), (1, 2)]
    assert paginate_lanes(0, 4) == [(0, 0)]


def test_lane_rng_streams():
    assert lane_rng(1, 'sample', 0).random() == lane_rng(1, 'sample', 0).random()
    assert lane_rng(1, 'sample', 0).random() != lane_rng(1, 'sample', 1).random()
    assert lane_rng(1, 'sample').random() != lane_rng(1, 'train').random()


def test_lane_draws_concatenate_in_order():
    draws = lane_draws(3, 'x', 10, 3, lambda rng, n: rng.standard_normal(n))
    assert draws.shape == (10,)
    assert np.array_equal(draws[:4], lane_rng(3, 'x', 0).standard_normal(4))


def test_output_folder_writes_and_cleans_up(tmp_path):
    folder = OutputFolder(str(tmp_path / 'run'), config_hash='abc', seed=9)
    folder.write_csv('values.csv', ['t', 'K'], [(0.1, 2.0), (0.2, 1 / 3)])
    folder.write_json('summary.json', {'b': 1, 'a': np.float64(2.0)})
    comment, header, rows = read_csv(folder.file_path('values.csv'))
    assert comment == '# config_hash=abc seed=9'
    assert header == ['t', 'K']
    assert float(rows[1][1]) == 1 / 3
    assert json.loads(open(folder.file_path('summary.json')).read()) == {'a': 2.0, 'b': 1}
    assert folder.names == ['values.csv', 'summary.json']

    folder.cleanup()
    assert not os.path.exists(tmp_path / 'run')


def test_output_folder_keeps_existing_directory(tmp_path):
    (tmp_path / 'keep.txt').write_text('x')
    folder = OutputFolder(str(tmp_path))
    folder.write_json('a.json', {})
    folder.cleanup()
    assert os.path.exists(tmp_path / 'keep.txt')
    assert not os.path.exists(tmp_path / 'a.json')


def test_output_file_names_are_sanitized(tmp_path):
    folder = OutputFolder(str(tmp_path))
    assert folder.file_path('../escape.csv') == os.path.join(str(tmp_path), 'escape.csv')
    with pytest.raises(ConfigError):
        folder.file_path('..')
