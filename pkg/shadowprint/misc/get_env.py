# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import logging
import os

__ISFILE = 0
__ISDIR = 1


def get_env_int(environ, default, minimum=None):
    """
    Read an integer setting from an environment variable
    :param environ: Environment variable to read
    :param default: value returned if the variable is unset or invalid
    :param minimum: optional lower bound; smaller values are ignored
    :return: integer value
    :rtype: int
    """
    value = os.environ.get(environ)
    if value is None or len(value.strip()) == 0:
        return default
    if not value.strip().isdigit():
        logging.warning(f'Non-integer value in environment variable {environ}, ignoring')
        return default
    value = int(value.strip())
    if minimum is not None and value < minimum:
        logging.warning(f'Value in environment variable {environ} is less than {minimum}, ignoring')
        return default
    return value


def test_file_path(filename, nonexistent=None, not_ok_msg=None):
    """
    Test a file path, to see if it is exists and is a file
    :param filename: path to filesystem object to check
    :param nonexistent: message to log if nonexistent
    :param not_ok_msg: message to log if not a file
    :return: True if exists & is a file
    """
    return __test_path(filename, __ISFILE, nonexistent=nonexistent, not_ok_msg=not_ok_msg)


def test_dir_path(path, nonexistent=None, not_ok_msg=None):
    """
    Test a dir path, to see if it is exists and is a dir
    :param path: path to filesystem object to check
    :param nonexistent: message to log if nonexistent
    :param not_ok_msg: message to log if not a dir
    :return: True if exists & is a dir
    """
    return __test_path(path, __ISDIR, nonexistent=nonexistent, not_ok_msg=not_ok_msg)


def __test_path(path, chk_type, nonexistent=None, not_ok_msg=None):
    is_ok = False
    if path is not None:
        if not os.path.exists(path):
            if nonexistent is not None:
                logging.warning(nonexistent)
        else:
            if chk_type == __ISFILE:
                is_ok = os.path.isfile(path)
            elif chk_type == __ISDIR:
                is_ok = os.path.isdir(path)
            if not is_ok:
                if not_ok_msg is not None:
                    logging.warning(not_ok_msg)

    return is_ok
