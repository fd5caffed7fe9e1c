# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import json
from dataclasses import dataclass
from enum import Enum

from shadowprint.misc.errors import (
    ConfigError,
    DimensionError
)


class OptimizerKind(Enum):
    ADAM = 'adam'
    SGD_MOMENTUM = 'sgd_momentum'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ConfigError(f'Unknown optimizer "{value}"; expected one of {[m.value for m in cls]}')


@dataclass(frozen=True)
class TrainConfig:
    """
    Mini-batch training hyperparameters
    """
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: OptimizerKind = OptimizerKind.ADAM
    seed: int = 0
    shuffle: bool = True
    momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, 'optimizer', OptimizerKind.parse(self.optimizer))
        if self.epochs < 1:
            raise ConfigError(f'epochs must be at least 1, got {self.epochs}')
        if self.batch_size < 1:
            raise ConfigError(f'batch_size must be at least 1, got {self.batch_size}')
        if self.lr <= 0:
            raise ConfigError(f'lr must be positive, got {self.lr}')
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f'momentum must lie in [0, 1), got {self.momentum}')


@dataclass(frozen=True)
class TrainReport:
    """
    One entry per completed epoch; test accuracies are None when no clean test set was supplied
    """
    epoch_losses: tuple
    test_accuracies: tuple
    checksum: str
    wall_time: float

    def __post_init__(self):
        object.__setattr__(self, 'epoch_losses', tuple(float(v) for v in self.epoch_losses))
        object.__setattr__(self, 'test_accuracies',
                           tuple(None if v is None else float(v) for v in self.test_accuracies))
        if len(self.epoch_losses) != len(self.test_accuracies):
            raise DimensionError('TrainReport needs one loss and one accuracy entry per epoch')

    @property
    def epochs(self):
        return len(self.epoch_losses)

    def to_dict(self):
        return {
            'epoch_losses': list(self.epoch_losses),
            'test_accuracies': list(self.test_accuracies),
            'checksum': self.checksum,
            'wall_time': self.wall_time,
        }

    def save(self, filename):
        with open(filename, 'w', encoding='utf-8') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
