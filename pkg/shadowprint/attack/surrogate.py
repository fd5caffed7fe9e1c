# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import logging

from shadowprint.misc.errors import (
    ConfigError,
    ContractError
)
from shadowprint.models.ModelSpec import get_spec
from shadowprint.training.TrainConfig import TrainConfig
from shadowprint.training.trainer import train
from .AttackConfig import Scenario


def resolve_surrogate_spec(config, attacker_data, victim_spec=None):
    """
    Surrogate architecture for the attack scenario, sized for the attacker data
    :param config: AttackConfig
    :param attacker_data: Dataset the surrogate is trained on; sets the class count and input shape
    :param victim_spec: optional victim ModelSpec, checked against the scenario
    :return: ModelSpec with the config's embedding tap
    :raises ConfigError: A1 surrogate differs from the victim architecture
    """
    if victim_spec is not None:
        same = victim_spec.name == config.surrogate_spec
        if config.scenario == Scenario.A1_WHITE_BOX and not same:
            raise ConfigError(f'Scenario A1 needs the victim architecture {victim_spec.name} as surrogate, '
                              f'got {config.surrogate_spec}')
        if config.scenario != Scenario.A1_WHITE_BOX and same:
            logging.warning(f'Scenario {config.scenario.value} uses the victim architecture '
                            f'{victim_spec.name} as surrogate')
    return get_spec(config.surrogate_spec, num_classes=attacker_data.num_classes,
                    input_shape=attacker_data.image_shape, embedding_tap=config.embedding_tap)


def train_surrogate(config, attacker_data, victim_spec=None, train_config=None):
    """
    Clean training of the surrogate on the attacker's data
    :param config: AttackConfig
    :param attacker_data: Dataset
    :param victim_spec: optional victim ModelSpec, checked against the scenario
    :param train_config: TrainConfig; defaults to surrogate_epochs epochs of Adam seeded by config.seed
    :return: tuple of (ModelParams, ModelSpec)
    """
    if len(attacker_data) == 0:
        raise ContractError('Surrogate training needs attacker data')
    spec = resolve_surrogate_spec(config, attacker_data, victim_spec)
    if train_config is None:
        train_config = TrainConfig(epochs=config.surrogate_epochs, seed=config.seed)
    logging.info(f'Training surrogate {spec.name} on {len(attacker_data)} samples ({config.scenario.value})')
    params, _ = train(spec, attacker_data, train_config)
    return params, spec
