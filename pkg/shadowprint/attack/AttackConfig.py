# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import json
from dataclasses import (
    asdict,
    dataclass,
    field
)
from enum import Enum
from typing import Optional

import numpy as np

from shadowprint.data.Dataset import SubsetSpec
from shadowprint.misc.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    NumericError
)
from shadowprint.models.ModelSpec import (
    SPEC_NAMES,
    EmbeddingTap
)


class _ParsableEnum(Enum):

    @classmethod
    def parse(cls, value):
        """
        Resolve a member from itself, its value or its name (case-insensitive)
        :raises ConfigError: no such member
        """
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ConfigError(f'Unknown {cls.__name__} "{value}"; expected one of {[m.value for m in cls]}')


class AttackMode(_ParsableEnum):
    DIRTY_LABEL = 'dirty_label'
    CLEAN_LABEL = 'clean_label'
    DATA_FREE = 'data_free'


class Scenario(_ParsableEnum):
    """
    Attacker knowledge: A1 victim architecture and data, A2 victim data only,
    A3 neither (auxiliary data from a disjoint domain)
    """
    A1_WHITE_BOX = 'a1'
    A2_BLACK_BOX = 'a2'
    A3_DATA_FREE = 'a3'


@dataclass(frozen=True)
class AttackConfig:
    mode: AttackMode
    scenario: Scenario
    poison_rate: float
    trigger_weight: float
    target_label: int
    steps: int
    batch_size: int = 64
    lr: float = 0.01
    seed: int = 0
    surrogate_spec: str = 'SmallCNN_A'
    attacker_data: Optional[SubsetSpec] = None
    init_std: float = 0.5
    embedding_tap: EmbeddingTap = EmbeddingTap.LAST_FC_OUTPUT
    surrogate_epochs: int = 5
    # weight of the surrogate cross-entropy towards target_label in the trigger objective;
    # None selects 1.0 for clean-label and 0.0 otherwise
    target_loss_weight: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'mode', AttackMode.parse(self.mode))
        object.__setattr__(self, 'scenario', Scenario.parse(self.scenario))
        object.__setattr__(self, 'embedding_tap', EmbeddingTap.parse(self.embedding_tap))

        if not 0.0 < self.poison_rate < 1.0:
            raise ConfigError(f'poison_rate must lie in (0, 1), got {self.poison_rate}')
        if not 0.0 < self.trigger_weight <= 1.0:
            raise ConfigError(f'trigger_weight must lie in (0, 1], got {self.trigger_weight}')
        if self.target_label < 0:
            raise ConfigError(f'target_label must be a class index, got {self.target_label}')
        if self.steps < 0:
            raise ConfigError(f'steps must be non-negative, got {self.steps}')
        if self.batch_size < 1 or self.surrogate_epochs < 1:
            raise ConfigError('batch_size and surrogate_epochs must be positive')
        if self.lr <= 0 or self.init_std <= 0:
            raise ConfigError(f'lr and init_std must be positive, got {self.lr} and {self.init_std}')
        if self.surrogate_spec not in SPEC_NAMES:
            raise ConfigError(f'Unknown surrogate spec "{self.surrogate_spec}"; expected one of {list(SPEC_NAMES)}')
        if self.scenario == Scenario.A3_DATA_FREE and self.mode != AttackMode.DATA_FREE:
            raise ConfigError(f'Scenario A3 requires mode {AttackMode.DATA_FREE.value}, got {self.mode.value}')
        if self.target_loss_weight is not None and self.target_loss_weight < 0:
            raise ConfigError(f'target_loss_weight must be non-negative, got {self.target_loss_weight}')
        if self.mode == AttackMode.DATA_FREE and self.target_term_weight > 0:
            raise ConfigError('The data-free surrogate has no target class; target_loss_weight must be 0')

    @property
    def target_term_weight(self):
        if self.target_loss_weight is not None:
            return float(self.target_loss_weight)
        return 1.0 if self.mode == AttackMode.CLEAN_LABEL else 0.0

    def to_dict(self):
        snapshot = asdict(self)
        snapshot['mode'] = self.mode.value
        snapshot['scenario'] = self.scenario.value
        snapshot['embedding_tap'] = self.embedding_tap.value
        return snapshot


@dataclass(frozen=True, eq=False)
class Trigger:
    """
    Universal trigger pattern [C x H x W]; values are unconstrained, clipping happens after blending
    """
    pattern: np.ndarray
    init_seed: int
    steps_trained: int
    loss_trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        pattern = np.array(self.pattern, copy=True)
        if pattern.ndim != 3:
            raise DimensionError(f'Trigger pattern must be [C x H x W], got shape {pattern.shape}')
        if not np.all(np.isfinite(pattern)):
            raise NumericError('Trigger pattern holds non-finite values')
        if self.steps_trained < 0:
            raise ContractError(f'steps_trained must be non-negative, got {self.steps_trained}')
        pattern.flags.writeable = False
        object.__setattr__(self, 'pattern', pattern)
        object.__setattr__(self, 'loss_trace', tuple(float(v) for v in self.loss_trace))

    @property
    def shape(self):
        return tuple(self.pattern.shape)


@dataclass(frozen=True)
class PoisonManifest:
    """
    Provenance of a poisoned dataset
    """
    poisoned_indices: tuple
    original_labels: tuple
    assigned_labels: tuple
    trigger_hash: str
    config_snapshot: dict

    def __post_init__(self):
        for name in ('poisoned_indices', 'original_labels', 'assigned_labels'):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if not len(self.poisoned_indices) == len(self.original_labels) == len(self.assigned_labels):
            raise DimensionError('Poison manifest lists must have equal length')
        if list(self.poisoned_indices) != sorted(self.poisoned_indices):
            raise ContractError('Poison manifest indices must be sorted')

    def __len__(self):
        return len(self.poisoned_indices)

    def to_dict(self):
        return {
            'poisoned_indices': list(self.poisoned_indices),
            'original_labels': list(self.original_labels),
            'assigned_labels': list(self.assigned_labels),
            'trigger_hash': self.trigger_hash,
            'config_snapshot': self.config_snapshot,
        }

    def save(self, filename):
        with open(filename, 'w', encoding='utf-8') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, filename):
        with open(filename, 'r', encoding='utf-8') as fh:
            return cls(**json.load(fh))
