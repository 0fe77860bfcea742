# utils/validators.py - Configuration validation utilities
import json
import os

from utils.errors import ConfigError

TRUE_VALUES = {'1', 'true', 'yes', 'on'}
FALSE_VALUES = {'0', 'false', 'no', 'off'}
CONFIG_FILE_KINDS = {
    '.json': 'json',
    '.env': 'dotenv',
    '.cfg': 'dotenv',
    '.conf': 'dotenv',
    '.txt': 'dotenv',
    '': 'dotenv',
}


def _float(low=None, high=None, low_open=False):
    def coerce(value):
        value = float(value)
        if low is not None and (value < low or (low_open and value == low)):
            raise ValueError(f'must be {">" if low_open else ">="} {low}')
        if high is not None and value > high:
            raise ValueError(f'must be <= {high}')
        return value
    return coerce


def _int(low=None):
    def coerce(value):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError('must be an integer')
        value = int(value)
        if low is not None and value < low:
            raise ValueError(f'must be >= {low}')
        return value
    return coerce


def _bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in TRUE_VALUES:
        return True
    if text in FALSE_VALUES:
        return False
    raise ValueError('must be a boolean')


def _choice(*options):
    def coerce(value):
        value = str(getattr(value, 'value', value)).strip().lower()
        if value not in options:
            raise ValueError(f'must be one of {", ".join(options)}')
        return value
    return coerce


def _sequence(item):
    def coerce(value):
        if isinstance(value, str):
            value = [v for v in value.replace(' ', '').split(',') if v]
        values = tuple(item(v) for v in value)
        if not values:
            raise ValueError('must not be empty')
        return values
    return coerce


def _json(value):
    if value is None or isinstance(value, (list, dict)):
        return value
    text = str(value).strip()
    return json.loads(text) if text else None


def _seed(value):
    value = int(value)
    if not 0 <= value < 2 ** 64:
        raise ValueError('must be an unsigned 64-bit integer')
    return value


CONFIG_SCHEMA = {
    'LOG_LEVEL': _choice('debug', 'info', 'warning', 'error'),
    'OUTPUT_FOLDER': str,
    'SCHEDULE_KIND': _choice('linear', 'quadratic', 'cosine', 'cosine_shift', 'zero_terminal_snr'),
    'BETA_MIN_BAR': _float(0.0),
    'BETA_MAX_BAR': _float(0.0, low_open=True),
    'COSINE_OFFSET': _float(0.0),
    'SHIFT_FACTOR': _float(0.0, low_open=True),
    'MODIFIED_NS': _bool,
    'NUM_TIMESTEPS': _int(2),
    'DATA_KIND': _choice('standard_normal', 'ring', 'custom'),
    'DATA_DIM': _int(1),
    'RING_COMPONENTS': _int(1),
    'RING_RADIUS': _float(0.0),
    'RING_STD': _float(0.0, low_open=True),
    'MIXTURE_WEIGHTS': _json,
    'MIXTURE_MEANS': _json,
    'MIXTURE_COVARIANCES': _json,
    'T_TILDE': _float(0.0, 1.0),
    'NUM_INTERVALS': _int(1),
    'QUADRATURE_ORDER': _int(32),
    'GRID_POINTS': _int(2),
    'N_SWEEP': _sequence(_int(1)),
    'MC_SAMPLES': _int(1),
    'LIPSCHITZ_DT': _float(0.0, low_open=True),
    'N_PROJECTIONS': _int(1),
    'LANES': _int(1),
    'SEED': _seed,
    'PERTURB_SCALES': _sequence(_float(0.0)),
    'PERTURB_TRAJECTORY': _bool,
    'PERTURB_STEPS': _int(1),
    'SAMPLER_KIND': _choice('ancestral', 'reverse_sde_euler', 'ddim', 'dpm_solver1', 'dpm_solver2',
                            'dpm_solver3', 'forward_euler'),
    'NFE': _int(1),
    'ETA': _float(0.0),
    'N_SAMPLES': _int(1),
    'TIME_GRID': _choice('uniform', 'logsnr'),
    'USE_PARTITION': _bool,
    'OBJECTIVE': _choice('eps', 'v'),
    'CONDITION_MAP': _choice('identity', 'shared', 'remap'),
    'REMAP_KIND': _choice('inverse_t', 'inverse_sigmoid'),
    'TIME_SAMPLING': _choice('uniform_t', 'uniform_lambda'),
    'LAMBDA_CAP': _float(0.0, low_open=True),
    'REG_WEIGHT': _float(0.0),
    'REG_DT': _float(0.0, low_open=True),
    'REG_RANDOM_OFFSET': _bool,
    'LEARNING_RATE': _float(0.0, low_open=True),
    'BATCH_SIZE': _int(1),
    'TRAIN_STEPS': _int(0),
    'EMA_DECAY': _float(0.0, 1.0),
    'HIDDEN': _sequence(_int(1)),
    'ACTIVATION': _choice('silu', 'relu'),
    'EMBEDDING_DIM': _int(2),
    'LOG_EVERY': _int(0),
    'COMPARE_METHODS': _sequence(_choice('baseline', 'shared', 'ddpm_r', 'modified_ns', 'remap')),
    'COMPARE_N_VALUES': _sequence(_int(1)),
    'COMPARE_T_TILDES': _sequence(_float(0.0, 1.0, low_open=True)),
}


def validate_required_fields(data, required_fields):
    """Validate that all required fields are present and not empty"""
    missing_fields = [f for f in required_fields if data.get(f) in (None, '', ())]
    if missing_fields:
        return f"Missing required fields: {', '.join(missing_fields)}"
    return None


def coerce_value(key, value):
    """Coerce one raw config value; raises ConfigError naming the key"""
    key = key.upper()
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f'Unknown config key: {key}')
    if value is None:
        return None
    try:
        return CONFIG_SCHEMA[key](value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'Invalid value for {key}: {value!r} ({e})') from e


def validate_config(raw):
    """Coerce every key of a raw mapping; raises ConfigError on the first bad key"""
    return {key.upper(): coerce_value(key, value) for key, value in raw.items()}


def config_file_kind(path):
    """'json' for manifests, 'dotenv' for KEY=value files (.env, .cfg, .conf, .txt or no extension)"""
    _, extension = os.path.splitext(os.path.basename(os.fspath(path)))
    try:
        return CONFIG_FILE_KINDS[extension.lower()]
    except KeyError:
        raise ConfigError(f'Unsupported config file type: {path}') from None
