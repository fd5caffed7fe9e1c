# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import itertools

from shadowprint.attack.AttackConfig import (
    AttackConfig,
    AttackMode,
    Scenario
)
from shadowprint.data.Dataset import SubsetSpec
from shadowprint.misc.config_reader import (
    as_bool,
    as_float,
    as_int,
    as_list,
    load_cfg_file,
    load_config
)
from shadowprint.misc.errors import ConfigError
from shadowprint.models.ModelSpec import (
    SPEC_NAMES,
    EmbeddingTap
)
from shadowprint.training.TrainConfig import TrainConfig

DATASETS = ('synth_blobs', 'cifar10')
DETECTORS = ('scale', 'gram', 'cluster')


class ExperimentConfig:
    """
    Attack/defense campaign configuration.
    Values are held as strings, as read from a flat 'key = value' or YAML file, and converted on access.
    """

    REQUIRED_KEYS = (
        'output_dir',  # directory receiving report.csv, baseline.csv and trials/
    )
    KEYS = REQUIRED_KEYS + (
        'victim_spec',  # SmallCNN_A, SmallCNN_B or SmallMLP
        'scenario',  # a1, a2 or a3
        'mode',  # dirty_label, clean_label or data_free
        'master_seed',  # every trial seed derives from it
        'repeats',  # independent trials averaged per grid point
        'dump_images',  # clean/poisoned image pairs written per trial
        'dataset.name',  # synth_blobs or cifar10
        'dataset.num_classes',
        'dataset.per_class',  # synth training samples per class
        'dataset.test_per_class',  # synth test samples per class
        'dataset.image_size',
        'dataset.noise_std',
        'dataset.pattern_seed',
        'dataset.aux_pattern_seed',  # pattern seed of the disjoint auxiliary domain used by a3
        'dataset.cifar10_dir',
        'dataset.train_size',  # cifar10 training subset size, 0 for all
        'dataset.test_size',  # cifar10 test subset size, 0 for all
        'grid.poison_rate',
        'grid.trigger_weight',
        'grid.train_scale',  # fraction of the training (or auxiliary) set available to the attacker
        'train.epochs',
        'train.batch_size',
        'train.lr',
        'train.optimizer',
        'train.momentum',
        'train.shuffle',
        'attack.target_label',
        'attack.steps',
        'attack.batch_size',
        'attack.lr',
        'attack.init_std',
        'attack.embedding_tap',
        'attack.surrogate_spec',  # defaults to the victim for a1, another architecture otherwise
        'attack.surrogate_epochs',
        'attack.target_loss_weight',  # empty selects 1.0 for clean_label and 0.0 otherwise
        'defenses',  # any of scale, gram, cluster
        'defense.calibration_fpr',
        'defense.scales',
    )
    DEFAULTS = {
        'victim_spec': 'SmallCNN_A',
        'scenario': 'a1',
        'mode': 'dirty_label',
        'master_seed': '0',
        'repeats': '1',
        'dump_images': '0',
        'dataset.name': 'synth_blobs',
        'dataset.num_classes': '8',
        'dataset.per_class': '500',
        'dataset.test_per_class': '100',
        'dataset.image_size': '32',
        'dataset.noise_std': '0.15',
        'dataset.pattern_seed': '0',
        'dataset.aux_pattern_seed': '1',
        'dataset.cifar10_dir': '',
        'dataset.train_size': '0',
        'dataset.test_size': '0',
        'grid.poison_rate': '0.01',
        'grid.trigger_weight': '0.3',
        'grid.train_scale': '0.1',
        'train.epochs': '10',
        'train.batch_size': '64',
        'train.lr': '0.001',
        'train.optimizer': 'adam',
        'train.momentum': '0.9',
        'train.shuffle': 'true',
        'attack.target_label': '0',
        'attack.steps': '30',
        'attack.batch_size': '64',
        'attack.lr': '0.01',
        'attack.init_std': '0.5',
        'attack.embedding_tap': 'last_fc_output',
        'attack.surrogate_spec': '',
        'attack.surrogate_epochs': '5',
        'attack.target_loss_weight': '',
        'defenses': 'scale, gram, cluster',
        'defense.calibration_fpr': '0.05',
        'defense.scales': '3, 5, 7, 9, 11',
    }

    def __init__(self, cfg_filename=None, cfg_dict=None, overrides=None):
        """
        Initialise object
        :param cfg_filename: Path of configuration file (flat or YAML)
        :param cfg_dict: Configuration dict
        :param overrides: dict of settings applied after the file/dict
        :raises ConfigError: missing required key or invalid value
        """
        self._values = dict(ExperimentConfig.DEFAULTS)
        self._values['output_dir'] = None
        if cfg_filename is not None:
            self._load_cfg_filename(cfg_filename)
        elif cfg_dict is not None:
            self.__set_config(cfg_dict)
        if overrides:
            self.__set_config(overrides, strict=True)

        for key in ExperimentConfig.REQUIRED_KEYS:
            if self[key] is None or len(str(self[key]).strip()) == 0:
                raise ConfigError(f'Missing {key} configuration')
        self.validate()

    def __set_config(self, config, strict=False):
        """
        Set the configuration
        :param config: dict with settings
        :param strict: reject unknown keys instead of skipping them
        """
        for key, value in config.items():
            key = key.lower()
            if key in ExperimentConfig.KEYS:
                self[key] = None if value is None else str(value)
            elif strict:
                raise ConfigError(f'The key "{key}" is not valid')

    def _load_cfg_file(self, cfg_file):
        """
        Read settings from specified configuration file
        :param cfg_file: Configuration file descriptor to load
        """
        self.__set_config(load_cfg_file(cfg_file, ExperimentConfig.KEYS))

    def _load_cfg_filename(self, cfg_filename):
        """
        Read settings from specified configuration file
        :param cfg_filename: Path of configuration file to load
        """
        self.__set_config(load_config(cfg_filename, ExperimentConfig.KEYS))

    def __setitem__(self, key, value):
        """
        Implement assignment to self[key]
        :param key: configuration key
        :param value: value to assign
        """
        if key not in ExperimentConfig.KEYS:
            raise ConfigError(f'The key "{key}" is not valid')
        self._values[key] = value

    def __getitem__(self, key):
        """
        Implement evaluation of self[key]
        :param key: configuration key
        """
        if key not in ExperimentConfig.KEYS:
            raise ConfigError(f'The key "{key}" is not valid')
        return self._values[key]

    def to_dict(self):
        return {key: self._values[key] for key in ExperimentConfig.KEYS}

    # typed accessors

    @property
    def output_dir(self):
        return self['output_dir']

    @property
    def victim_spec(self):
        return self['victim_spec'].strip()

    @property
    def scenario(self):
        return Scenario.parse(self['scenario'])

    @property
    def mode(self):
        return AttackMode.parse(self['mode'])

    @property
    def master_seed(self):
        return as_int('master_seed', self['master_seed'])

    @property
    def repeats(self):
        return as_int('repeats', self['repeats'])

    @property
    def dump_images(self):
        return as_int('dump_images', self['dump_images'])

    @property
    def dataset_name(self):
        return self['dataset.name'].strip().lower()

    def dataset_int(self, name):
        return as_int(f'dataset.{name}', self[f'dataset.{name}'])

    def dataset_float(self, name):
        return as_float(f'dataset.{name}', self[f'dataset.{name}'])

    def _optional_float(self, key):
        value = str(self[key]).strip()
        return as_float(key, value) if value else None

    @property
    def poison_rates(self):
        return as_list('grid.poison_rate', self['grid.poison_rate'], as_float)

    @property
    def trigger_weights(self):
        return as_list('grid.trigger_weight', self['grid.trigger_weight'], as_float)

    @property
    def train_scales(self):
        return as_list('grid.train_scale', self['grid.train_scale'], as_float)

    def grid(self):
        """
        Grid points in deterministic order: poison_rate outermost, train_scale innermost
        :return: list of (poison_rate, trigger_weight, train_scale)
        """
        return list(itertools.product(self.poison_rates, self.trigger_weights, self.train_scales))

    @property
    def surrogate_spec(self):
        name = self['attack.surrogate_spec'].strip()
        if name:
            return name
        if self.scenario == Scenario.A1_WHITE_BOX:
            return self.victim_spec
        return 'SmallCNN_B' if self.victim_spec == 'SmallCNN_A' else 'SmallCNN_A'

    @property
    def defenses(self):
        return [name.lower() for name in as_list('defenses', self['defenses'])]

    @property
    def calibration_fpr(self):
        return as_float('defense.calibration_fpr', self['defense.calibration_fpr'])

    @property
    def scales(self):
        return as_list('defense.scales', self['defense.scales'], as_float)

    def train_config(self, seed, epochs=None):
        return TrainConfig(epochs=as_int('train.epochs', self['train.epochs']) if epochs is None else epochs,
                           batch_size=as_int('train.batch_size', self['train.batch_size']),
                           lr=as_float('train.lr', self['train.lr']),
                           optimizer=self['train.optimizer'],
                           seed=seed,
                           shuffle=as_bool('train.shuffle', self['train.shuffle']),
                           momentum=as_float('train.momentum', self['train.momentum']))

    def attack_config(self, poison_rate, trigger_weight, seed, attacker_data=None):
        return AttackConfig(mode=self.mode,
                            scenario=self.scenario,
                            poison_rate=poison_rate,
                            trigger_weight=trigger_weight,
                            target_label=as_int('attack.target_label', self['attack.target_label']),
                            steps=as_int('attack.steps', self['attack.steps']),
                            batch_size=as_int('attack.batch_size', self['attack.batch_size']),
                            lr=as_float('attack.lr', self['attack.lr']),
                            seed=seed,
                            surrogate_spec=self.surrogate_spec,
                            attacker_data=attacker_data,
                            init_std=as_float('attack.init_std', self['attack.init_std']),
                            embedding_tap=EmbeddingTap.parse(self['attack.embedding_tap']),
                            surrogate_epochs=as_int('attack.surrogate_epochs', self['attack.surrogate_epochs']),
                            target_loss_weight=self._optional_float('attack.target_loss_weight'))

    def validate(self):
        """
        Check every value
        :raises ConfigError: invalid value
        """
        if self.victim_spec not in SPEC_NAMES:
            raise ConfigError(f'Unknown victim_spec "{self.victim_spec}"; expected one of {list(SPEC_NAMES)}')
        if self.dataset_name not in DATASETS:
            raise ConfigError(f'Unknown dataset.name "{self.dataset_name}"; expected one of {list(DATASETS)}')
        if self.dataset_name == 'cifar10' and not self['dataset.cifar10_dir']:
            raise ConfigError('dataset.cifar10_dir is required for the cifar10 dataset')
        for name in ('num_classes', 'per_class', 'test_per_class', 'image_size'):
            if self.dataset_int(name) < 1:
                raise ConfigError(f'dataset.{name} must be positive')
        for name in ('train_size', 'test_size', 'pattern_seed', 'aux_pattern_seed'):
            if self.dataset_int(name) < 0:
                raise ConfigError(f'dataset.{name} must be non-negative')
        if self.dataset_float('noise_std') < 0:
            raise ConfigError('dataset.noise_std must be non-negative')
        if self.dataset_int('pattern_seed') == self.dataset_int('aux_pattern_seed'):
            raise ConfigError('dataset.aux_pattern_seed must differ from dataset.pattern_seed')
        if self.repeats < 1:
            raise ConfigError(f'repeats must be at least 1, got {self.repeats}')
        if self.dump_images < 0:
            raise ConfigError(f'dump_images must be non-negative, got {self.dump_images}')

        grid = self.grid()
        if len(grid) == 0:
            raise ConfigError('The experiment grid is empty')
        for scale in self.train_scales:
            SubsetSpec(source='', fraction=scale)
        for poison_rate, trigger_weight, _ in grid:
            self.attack_config(poison_rate, trigger_weight, seed=0)
        self.train_config(seed=0)

        if self.scenario == Scenario.A1_WHITE_BOX and self.surrogate_spec != self.victim_spec:
            raise ConfigError(f'Scenario A1 needs the victim architecture {self.victim_spec} as surrogate, '
                              f'got {self.surrogate_spec}')
        unknown = [name for name in self.defenses if name not in DETECTORS]
        if unknown:
            raise ConfigError(f'Unknown defenses {unknown}; expected any of {list(DETECTORS)}')
        if len(self.scales) == 0 or any(s <= 0 for s in self.scales):
            raise ConfigError('defense.scales must hold positive scales')
        if not 0.0 < self.calibration_fpr < 1.0:
            raise ConfigError('defense.calibration_fpr must lie in (0, 1)')
