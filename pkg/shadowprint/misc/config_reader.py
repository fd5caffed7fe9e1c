# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from io import SEEK_SET
from os import (
    path,
    getcwd
)
import re
import logging
import yaml

from .errors import ConfigError
from .get_env import test_file_path


def load_cfg_file(cfg_file, keys, separator='='):
    """
    Read settings from specified configuration file
    :param cfg_file: Configuration file descriptor to load
    :param keys: List of keys for which to retrieve values; dotted keys such as 'attack.steps' are allowed
    :param separator: Optional key/value separator,defaults to '='
    :return: dict of key/values
    :rtype: dict
    :raises ConfigError when invalid configuration entries detected
    """
    if cfg_file is None:
        raise ConfigError('Missing configuration file argument')

    config = {}
    cfg_file.seek(0, SEEK_SET)  # seek start of file
    count = 0
    for line in cfg_file:
        line = line.strip()
        count += 1

        # skip blank or commented lines
        if len(line) == 0:
            continue
        if line.startswith('#'):
            continue

        key_val = re.match(rf'([\w.]*)\s*{separator}(.*)', line)
        if not key_val:
            raise ConfigError(f'Invalid configuration file entry on line {count}: {line}')

        key = key_val.groups()[0].lower().strip()
        if len(key) == 0:
            raise ConfigError(f'Missing key entry on line {count}: {line}')
        value = key_val.groups()[1].strip()
        if len(value) == 0:
            raise ConfigError(f'Missing value entry on line {count}: {line}')

        if key in keys:
            config[key] = value
        else:
            logging.info(f'Ignoring unknown entry on line {count}')

    return config


def load_cfg_filename(cfg_filename, keys, separator='='):
    """
    Read settings from specified configuration file
    :param cfg_filename: Path of configuration file to load
    :param keys: List of keys for which to retrieve values
    :param separator: Optional key/value separator,defaults to '='
    :return: dict of key/values
    :rtype: dict
    :raises ConfigError when invalid configuration entries detected
    """
    __check_cfg_filename(cfg_filename)

    with open(cfg_filename, 'r', encoding='utf-8') as cfg_file:
        config = load_cfg_file(cfg_file, keys, separator=separator)

    return config


def __check_cfg_filename(cfg_filename):
    if cfg_filename is None:
        raise ConfigError('Missing configuration file argument')
    if not isinstance(cfg_filename, str):
        raise ConfigError('Invalid configuration file argument: expected string')
    if not path.exists(cfg_filename):
        raise ConfigError(f'Configuration file does not exist: {cfg_filename}\n'
                          f'  Current working directory: {getcwd()}')


def load_yaml(yaml_path, key=None):
    """
    Load yaml file and return the configuration dictionary
    :param yaml_path: path to the yaml configuration file
    :param key: configuration key to return; default is all keys
    :return: configuration dictionary
    :rtype: dict
    """
    # verify path
    if not path.exists(yaml_path):
        raise ConfigError(f'Invalid path: {yaml_path}')
    if not test_file_path(yaml_path):
        raise ConfigError(f'Not a file path: {yaml_path}')

    with open(yaml_path, 'r', encoding='utf-8') as file:
        try:
            configs = yaml.safe_load(file)
        except yaml.YAMLError as yaml_err:
            raise ConfigError(f'Invalid YAML in {yaml_path}: {yaml_err}') from yaml_err
    if configs is None:
        configs = {}
    if key is not None:
        if key not in configs:
            raise ConfigError(f'Key "{key}" not found in {yaml_path}')
        configs = configs[key]

    return configs


def flatten_dict(nested, prefix=''):
    """
    Flatten nested mappings into dotted keys, e.g. {'attack': {'steps': 3}} -> {'attack.steps': '3'}
    Lists are joined with commas so the result matches the flat file format.
    :param nested: dict to flatten
    :param prefix: key prefix
    :return: flat dict of string values
    :rtype: dict
    """
    flat = {}
    for key, value in nested.items():
        full_key = f'{prefix}{str(key).lower()}'
        if isinstance(value, dict):
            flat.update(flatten_dict(value, prefix=f'{full_key}.'))
        elif isinstance(value, (list, tuple)):
            flat[full_key] = ', '.join(str(v) for v in value)
        elif isinstance(value, bool):
            flat[full_key] = 'true' if value else 'false'
        else:
            flat[full_key] = str(value)
    return flat


def load_config(cfg_filename, keys):
    """
    Load a flat or YAML configuration file, chosen by extension
    :param cfg_filename: Path of configuration file to load
    :param keys: List of keys for which to retrieve values
    :return: dict of key/values (string values)
    :rtype: dict
    """
    __check_cfg_filename(cfg_filename)
    if cfg_filename.lower().endswith(('.yaml', '.yml')):
        flat = flatten_dict(load_yaml(cfg_filename))
        config = {}
        for key, value in flat.items():
            if key in keys:
                config[key] = value
            else:
                logging.info(f'Ignoring unknown entry {key}')
        return config
    return load_cfg_filename(cfg_filename, keys)


def as_bool(key, value):
    lwr = str(value).strip().lower()
    if lwr in ('true', 'yes', '1'):
        return True
    if lwr in ('false', 'no', '0'):
        return False
    raise ConfigError(f'Invalid value specified for {key}; must be "true" or "false"')


def as_int(key, value):
    try:
        return int(str(value).strip())
    except ValueError:
        raise ConfigError(f'Non-integer value specified for {key}: {value}') from None


def as_float(key, value):
    try:
        return float(str(value).strip())
    except ValueError:
        raise ConfigError(f'Non-numeric value specified for {key}: {value}') from None


def as_list(key, value, convert=None):
    """
    Split a comma separated value
    :param key: key name, used in error messages
    :param value: string value or list
    :param convert: optional conversion function taking (key, item)
    :return: list of values
    :rtype: list
    """
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [item.strip() for item in str(value).split(',') if len(item.strip()) > 0]
    if convert is not None:
        items = [convert(key, item) for item in items]
    return items
