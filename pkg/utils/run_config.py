# utils/run_config.py - Precedence-ordered run configuration
import os

from utils.file_handler import load_config_file
from utils.validators import CONFIG_SCHEMA, validate_config

ENV_PREFIX = 'LAB_'


def profile_values(app_config):
    """Schema keys carried by the active profile class"""
    return {key: app_config[key] for key in CONFIG_SCHEMA if key in app_config}


def environment_values(environ=None):
    environ = os.environ if environ is None else environ
    return {
        key[len(ENV_PREFIX):]: value
        for key, value in environ.items()
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):] in CONFIG_SCHEMA
    }


def resolve_config(app_config, config_path=None, overrides=None, environ=None):
    """profile class < LAB_* environment < --config file < command-line flags"""
    resolved = validate_config(profile_values(app_config))
    resolved.update(validate_config(environment_values(environ)))
    if config_path:
        resolved.update(validate_config(load_config_file(config_path)))
    if overrides:
        resolved.update(validate_config({k: v for k, v in overrides.items() if v is not None}))
    return resolved


def manifest_config(cfg):
    """Config as stored in a manifest: tuples become lists"""
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.items())}
