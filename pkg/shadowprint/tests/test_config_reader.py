# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import os
from io import StringIO
from unittest import TestCase
from unittest import mock

from testfixtures import (
    LogCapture,
    TempDirectory
)

from shadowprint.misc import (
    ConfigError,
    as_bool,
    as_float,
    as_int,
    as_list,
    flatten_dict,
    get_env_int,
    load_cfg_file,
    load_config
)

# keys which may be used for testing config file syntax
keys = (
    'output_dir',
    'attack.steps',
    'grid.trigger_weight',
)


class TestConfigReader(TestCase):
    """
    Configuration file reader tests
    """

    def test_load_cfg_file(self):
        # missing config file handle
        self.assertRaises(ConfigError, load_cfg_file, None, keys)

        str_io = StringIO()
        str_io.write(' # this is a comment\n')
        str_io.write('\n')
        str_io.write('output_dir = results\n')
        str_io.write('Attack.Steps= 30\n')
        str_io.write('grid.trigger_weight = 0.1, 0.3\n')

        config = load_cfg_file(str_io, keys)
        self.assertEqual({
            'output_dir': 'results',
            'attack.steps': '30',
            'grid.trigger_weight': '0.1, 0.3',
        }, config)

    def test_unknown_entry(self):
        str_io = StringIO()
        str_io.write('colour = blue\n')
        str_io.write('output_dir = results\n')

        with LogCapture() as log_cap:
            config = load_cfg_file(str_io, keys)
            log_cap.check(
                ('root', 'INFO', 'Ignoring unknown entry on line 1'),
            )
        self.assertEqual({'output_dir': 'results'}, config)

    def test_invalid_entries(self):
        for line in ['no separator here\n', 'output_dir =\n', '= 3\n']:
            str_io = StringIO()
            str_io.write(line)
            self.assertRaises(ConfigError, load_cfg_file, str_io, keys)

    def test_flatten_dict(self):
        nested = {
            'attack': {'steps': 3},
            'defenses': ['scale', 'gram'],
            'train': {'shuffle': True},
        }
        self.assertEqual({
            'attack.steps': '3',
            'defenses': 'scale, gram',
            'train.shuffle': 'true',
        }, flatten_dict(nested))

    def test_load_yaml_config(self):
        with TempDirectory() as tmp_dir:
            path = tmp_dir.write('experiment.yaml', b'output_dir: out\nattack:\n  steps: 5\nextra: 1\n')

            with LogCapture() as log_cap:
                config = load_config(path, keys)
                log_cap.check(
                    ('root', 'INFO', 'Ignoring unknown entry extra'),
                )
        self.assertEqual({'output_dir': 'out', 'attack.steps': '5'}, config)

    def test_load_flat_config(self):
        with TempDirectory() as tmp_dir:
            path = tmp_dir.write('experiment.cfg', b'output_dir = out\ngrid.trigger_weight = 0.2\n')
            config = load_config(path, keys)
        self.assertEqual({'output_dir': 'out', 'grid.trigger_weight': '0.2'}, config)

    def test_missing_config_file(self):
        with TempDirectory() as tmp_dir:
            path = os.path.join(tmp_dir.path, 'absent.cfg')
            with self.assertRaises(ConfigError) as context:
                load_config(path, keys)
        self.assertIn(path, str(context.exception))

    def test_conversions(self):
        self.assertTrue(as_bool('train.shuffle', 'Yes'))
        self.assertFalse(as_bool('train.shuffle', '0'))
        self.assertRaises(ConfigError, as_bool, 'train.shuffle', 'maybe')

        self.assertEqual(7, as_int('attack.steps', ' 7 '))
        self.assertRaises(ConfigError, as_int, 'attack.steps', '7.5')
        self.assertEqual(0.25, as_float('attack.lr', '0.25'))
        self.assertRaises(ConfigError, as_float, 'attack.lr', 'fast')

        self.assertEqual([0.1, 0.3], as_list('grid.trigger_weight', '0.1, 0.3,', as_float))
        self.assertEqual([1, 2], as_list('grid.trigger_weight', [1, 2]))
        self.assertEqual([], as_list('defenses', ''))


class TestGetEnv(TestCase):

    ENV = 'SHADOWPRINT_TEST_VALUE'

    def test_get_env_int(self):
        with mock.patch.dict(os.environ, {self.ENV: '4'}):
            self.assertEqual(4, get_env_int(self.ENV, 1, minimum=1))

        with mock.patch.dict(os.environ, {self.ENV: 'abc'}):
            with LogCapture() as log_cap:
                self.assertEqual(1, get_env_int(self.ENV, 1))
                log_cap.check(
                    ('root', 'WARNING', f'Non-integer value in environment variable {self.ENV}, ignoring'),
                )

        with mock.patch.dict(os.environ, {self.ENV: '0'}):
            with LogCapture() as log_cap:
                self.assertEqual(1, get_env_int(self.ENV, 1, minimum=1))
                log_cap.check(
                    ('root', 'WARNING', f'Value in environment variable {self.ENV} is less than 1, ignoring'),
                )

        with mock.patch.dict(os.environ, {}, clear=False):
            os.environ.pop(self.ENV, None)
            self.assertEqual(3, get_env_int(self.ENV, 3))
