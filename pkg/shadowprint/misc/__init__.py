# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .errors import (
    ShadowPrintError,
    ConfigError,
    DimensionError,
    ContractError,
    LabelIndexError,
    DataError,
    FormatError,
    CalibrationError,
    StateError,
    NumericError,
    DatasetIOError
)
from .config_reader import (
    load_cfg_file,
    load_cfg_filename,
    load_yaml,
    load_config,
    flatten_dict,
    as_bool,
    as_int,
    as_float,
    as_list
)
from .get_env import (
    get_env_int,
    test_file_path,
    test_dir_path
)

# if somebody does "from shadowprint.misc import *", this is what they will
# be able to access:
__all__ = [
    'ShadowPrintError',
    'ConfigError',
    'DimensionError',
    'ContractError',
    'LabelIndexError',
    'DataError',
    'FormatError',
    'CalibrationError',
    'StateError',
    'NumericError',
    'DatasetIOError',
    'load_cfg_file',
    'load_cfg_filename',
    'load_yaml',
    'load_config',
    'flatten_dict',
    'as_bool',
    'as_int',
    'as_float',
    'as_list',
    'get_env_int',
    'test_file_path',
    'test_dir_path',
]
