# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
import json
import logging
import math
import os

import numpy as np

from shadowprint.misc.errors import (
    ConfigError,
    DatasetIOError,
    FormatError
)
from shadowprint.misc.get_env import test_dir_path
from .Dataset import Dataset

CIFAR10_RECORD_BYTES = 3073
CIFAR10_SHAPE = (3, 32, 32)
CIFAR10_TRAIN_FILES = tuple(f'data_batch_{idx}.bin' for idx in range(1, 6))
CIFAR10_TEST_FILES = ('test_batch.bin',)

SYNTH_GRID = 4
SYNTH_LEVELS = (0.15, 0.85)
MAX_SYNTH_CLASSES = 16


def rounded_count(rate, total):
    """
    round(rate * total), halves rounding up, with a minimum of 1
    """
    return max(1, int(math.floor(rate * total + 0.5)))


def read_cifar10_batch(filename, name=None):
    """
    Read one CIFAR-10 binary batch: records of 1 label byte + 3072 channel-planar pixel bytes
    :param filename: path of the batch file
    :param name: dataset name; defaults to the file name
    :return: Dataset with pixels scaled by 1/255
    :raises DatasetIOError: missing or truncated file
    :raises FormatError: label byte greater than 9
    """
    if not os.path.isfile(filename):
        raise DatasetIOError('CIFAR-10 batch file not found', filename=filename, offset=0)
    with open(filename, 'rb') as fh:
        raw = fh.read()
    complete = len(raw) - len(raw) % CIFAR10_RECORD_BYTES
    if complete != len(raw) or len(raw) == 0:
        raise DatasetIOError('Truncated CIFAR-10 record', filename=filename, offset=complete)

    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size > 0:
        raise FormatError(f'{filename}: label byte {labels[bad[0]]} > 9 at offset '
                          f'{int(bad[0]) * CIFAR10_RECORD_BYTES}')
    images = records[:, 1:].reshape((-1,) + CIFAR10_SHAPE).astype(np.float32) / np.float32(255.0)
    return Dataset(images, labels, 10, os.path.basename(filename) if name is None else name)


def load_cifar10(directory, split='train'):
    """
    Load the CIFAR-10 binary distribution
    :param directory: directory holding data_batch_1.bin .. data_batch_5.bin and test_batch.bin
                      (or its cifar-10-batches-bin sub-directory)
    :param split: 'train' (50000 records) or 'test' (10000 records)
    :return: Dataset
    """
    if split not in ('train', 'test'):
        raise ConfigError(f'Unknown CIFAR-10 split "{split}"; expected "train" or "test"')
    nested = os.path.join(directory, 'cifar-10-batches-bin')
    if test_dir_path(nested):
        directory = nested
    files = CIFAR10_TRAIN_FILES if split == 'train' else CIFAR10_TEST_FILES

    parts = [read_cifar10_batch(os.path.join(directory, filename)) for filename in files]
    images = np.concatenate([part.images for part in parts])
    labels = np.concatenate([part.labels for part in parts])
    logging.info(f'Loaded {len(labels)} CIFAR-10 {split} records from {directory}')
    return Dataset(images, labels, 10, f'cifar10-{split}')


def _base_patterns(num_classes, channels, pattern_seed):
    rng = np.random.default_rng(pattern_seed)
    patterns = []
    seen = set()
    while len(patterns) < num_classes:
        cells = rng.integers(0, len(SYNTH_LEVELS), size=(channels, SYNTH_GRID, SYNTH_GRID))
        key = cells.tobytes()
        if key in seen:
            continue
        seen.add(key)
        patterns.append(np.asarray(SYNTH_LEVELS)[cells])
    return patterns


def synth_blobs(num_classes, per_class, image_size, noise_std, seed, pattern_seed=0, channels=3, name=None):
    """
    Synthetic image classes: each class is a distinct colour patch layout plus Gaussian pixel noise
    :param num_classes: number of classes, at most 16
    :param per_class: samples per class
    :param image_size: side length, at least 8
    :param noise_std: standard deviation of the pixel noise; 0 gives identical images within a class
    :param seed: seed of the noise
    :param pattern_seed: seed of the class patterns; different values give disjoint domains
    :param channels: image channels
    :param name: dataset name
    :return: Dataset ordered by class
    :raises ConfigError: invalid sizes
    """
    if not 1 <= num_classes <= MAX_SYNTH_CLASSES:
        raise ConfigError(f'synth_blobs: num_classes must lie in [1, {MAX_SYNTH_CLASSES}], got {num_classes}')
    if image_size < 8:
        raise ConfigError(f'synth_blobs: image_size must be at least 8, got {image_size}')
    if per_class < 1 or channels < 1:
        raise ConfigError(f'synth_blobs: per_class and channels must be positive, got {per_class} and {channels}')
    if noise_std < 0:
        raise ConfigError(f'synth_blobs: noise_std must be non-negative, got {noise_std}')

    cell_index = (np.arange(image_size) * SYNTH_GRID) // image_size
    rng = np.random.default_rng(seed)
    images = np.empty((num_classes * per_class, channels, image_size, image_size), dtype=np.float32)
    for label, cells in enumerate(_base_patterns(num_classes, channels, pattern_seed)):
        base = cells[:, cell_index][:, :, cell_index]
        noise = rng.normal(0.0, noise_std, size=(per_class,) + base.shape) if noise_std > 0 else 0.0
        images[label * per_class:(label + 1) * per_class] = np.clip(base + noise, 0.0, 1.0)
    labels = np.repeat(np.arange(num_classes), per_class)
    if name is None:
        name = f'synth_blobs-p{pattern_seed}-s{seed}'
    return Dataset(images, labels, num_classes, name)


def sample_subset(dataset, spec):
    """
    Seeded uniform sample without replacement
    :param dataset: source Dataset
    :param spec: SubsetSpec; count = round(fraction * eligible), minimum 1
    :return: Dataset in source order
    :raises ConfigError: empty eligible pool or mismatched source
    """
    if spec.source and spec.source != dataset.name:
        raise ConfigError(f'Subset spec refers to "{spec.source}", not "{dataset.name}"')
    if spec.class_filter is None:
        eligible = np.arange(len(dataset))
    else:
        eligible = np.flatnonzero(dataset.labels == spec.class_filter)
    if len(eligible) == 0:
        raise ConfigError(f'No eligible samples in {dataset.name} (class filter {spec.class_filter})')

    count = min(rounded_count(spec.fraction, len(eligible)), len(eligible))
    rng = np.random.default_rng(spec.seed)
    chosen = np.sort(rng.choice(eligible, size=count, replace=False))
    return dataset.subset(chosen, name=f'{dataset.name}/subset')


def split_indices(total, fraction, seed):
    """
    Seeded disjoint partition of range(total)
    :return: tuple of sorted index arrays (first, second), len(first) = round(fraction * total)
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f'Split fraction must lie in (0, 1), got {fraction}')
    first_count = int(math.floor(fraction * total + 0.5))
    if first_count == 0 or first_count == total:
        raise ConfigError(f'Split fraction {fraction} of {total} samples leaves an empty part')
    order = np.random.default_rng(seed).permutation(total)
    return np.sort(order[:first_count]), np.sort(order[first_count:])


def split(dataset, fraction, seed):
    """
    Seeded disjoint, exhaustive split
    :return: tuple of (Dataset, Dataset)
    """
    first, second = split_indices(len(dataset), fraction, seed)
    return dataset.subset(first, name=f'{dataset.name}/a'), dataset.subset(second, name=f'{dataset.name}/b')


def _row_hashes(dataset):
    flat = np.ascontiguousarray(dataset.images, dtype='<f4').reshape(len(dataset), -1)
    return {hashlib.sha1(row.tobytes()).hexdigest() for row in flat}


def assert_disjoint(first, second):
    """
    Verify that no image appears in both datasets
    :raises ConfigError: shared samples found
    """
    shared = _row_hashes(first) & _row_hashes(second)
    if shared:
        raise ConfigError(f'{first.name} and {second.name} share {len(shared)} images')


def dataset_manifest(dataset, seed=None, sources=None):
    """
    JSON-serialisable description of a dataset
    """
    return {
        'name': dataset.name,
        'size': len(dataset),
        'num_classes': int(dataset.num_classes),
        'image_shape': list(dataset.image_shape),
        'class_counts': [int(c) for c in dataset.class_counts()],
        'seed': seed,
        'sources': list(sources) if sources else [],
        'source_hashes': {
            'images': dataset.image_hash(),
            'labels': dataset.label_hash(),
        },
    }


def write_manifest(filename, manifest):
    with open(filename, 'w', encoding='utf-8') as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def save_dataset(filename, dataset):
    np.savez_compressed(filename, images=dataset.images, labels=dataset.labels,
                        num_classes=np.array(dataset.num_classes), name=np.array(dataset.name))


def load_dataset(filename):
    if not os.path.isfile(filename):
        raise DatasetIOError('Dataset archive not found', filename=filename, offset=0)
    with np.load(filename, allow_pickle=False) as archive:
        return Dataset(archive['images'], archive['labels'], int(archive['num_classes']), str(archive['name']))
