# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import logging
import os

import numpy as np

from shadowprint.data.loaders import rounded_count
from shadowprint.misc.errors import (
    ConfigError,
    DimensionError
)
from .AttackConfig import (
    AttackMode,
    PoisonManifest
)
from .trigger import (
    blend,
    trigger_hash
)


def select_poison_indices(dataset, config, seed):
    """
    Choose the samples to poison, uniformly without replacement
    :param dataset: Dataset to poison
    :param config: AttackConfig; count = round(poison_rate * |dataset|), minimum 1
    :param seed: sampling seed
    :return: sorted numpy index array
    :raises ConfigError: empty eligible pool or target label outside the dataset's classes
    """
    if config.target_label >= dataset.num_classes:
        raise ConfigError(f'Target label {config.target_label} outside the {dataset.num_classes} classes '
                          f'of {dataset.name}')
    if len(dataset) == 0:
        raise ConfigError(f'Cannot poison the empty dataset {dataset.name}')

    count = rounded_count(config.poison_rate, len(dataset))
    if config.mode == AttackMode.CLEAN_LABEL:
        eligible = np.flatnonzero(dataset.labels == config.target_label)
        if len(eligible) == 0:
            raise ConfigError(f'Clean-label poisoning needs samples of class {config.target_label}')
        if count > len(eligible):
            logging.warning(f'Poison count {count} exceeds the {len(eligible)} samples of class '
                            f'{config.target_label}; poisoning all of them')
            count = len(eligible)
    else:
        eligible = np.arange(len(dataset))

    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(eligible, size=count, replace=False))


def poison_dataset(dataset, trigger, config, seed):
    """
    Blend the trigger into the selected samples of a copy of dataset.
    Dirty-label and data-free modes relabel them to the target class, clean-label keeps their labels.
    :return: tuple of (poisoned Dataset, PoisonManifest)
    :raises DimensionError: trigger shape differs from the dataset image shape
    """
    if trigger.shape != dataset.image_shape:
        raise DimensionError(f'Trigger of shape {trigger.shape} does not fit {dataset.name} images '
                             f'{dataset.image_shape}')
    indices = select_poison_indices(dataset, config, seed)
    images = dataset.images.copy()
    labels = dataset.labels.copy()
    images[indices] = blend(images[indices], trigger, config.trigger_weight)
    if config.mode != AttackMode.CLEAN_LABEL:
        labels[indices] = config.target_label

    manifest = PoisonManifest(poisoned_indices=indices,
                              original_labels=dataset.labels[indices],
                              assigned_labels=labels[indices],
                              trigger_hash=trigger_hash(trigger),
                              config_snapshot=config.to_dict())
    logging.info(f'Poisoned {len(indices)} of {len(dataset)} samples ({config.mode.value})')
    return dataset.replace(images=images, labels=labels, name=f'{dataset.name}+poison'), manifest


def write_ppm(filename, image):
    """
    Write one [C x H x W] image in [0, 1] as binary PPM (P6); pixel = round(value * 255)
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DimensionError(f'write_ppm expects a [1|3 x H x W] image, got shape {image.shape}')
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8).transpose(1, 2, 0)
    with open(filename, 'wb') as fh:
        fh.write(f'P6\n{pixels.shape[1]} {pixels.shape[0]}\n255\n'.encode('ascii'))
        fh.write(pixels.tobytes())


def dump_image_pairs(clean, poisoned, manifest, out_dir, k):
    """
    Write the first k poisoned samples next to their clean originals
    :return: list of written file paths (2 per sample)
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for index in manifest.poisoned_indices[:k]:
        for tag, dataset in (('clean', clean), ('poisoned', poisoned)):
            path = os.path.join(out_dir, f'{index:06d}_{tag}.ppm')
            write_ppm(path, dataset.images[index])
            paths.append(path)
    return paths
