# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import json
import os
import unittest
from unittest import TestCase

import numpy as np
from testfixtures import TempDirectory

from shadowprint.data import (
    Dataset,
    SubsetSpec,
    assert_disjoint,
    dataset_manifest,
    load_cifar10,
    load_dataset,
    read_cifar10_batch,
    rounded_count,
    sample_subset,
    save_dataset,
    split,
    synth_blobs,
    write_manifest
)
from shadowprint.misc import (
    ConfigError,
    DataError,
    DatasetIOError,
    FormatError
)

CIFAR10_ENV = 'SHADOWPRINT_CIFAR10_DIR'


def cifar_records(labels, pixel=0):
    records = np.full((len(labels), 3073), pixel, dtype=np.uint8)
    records[:, 0] = labels
    return records.tobytes()


def flat_dataset(count, num_classes=10):
    images = np.zeros((count, 1, 2, 2), dtype=np.float32)
    images[:, 0, 0, 0] = np.arange(count) / max(count - 1, 1)
    return Dataset(images, np.arange(count) % num_classes, num_classes, 'flat')


class TestDataset(TestCase):

    def test_invariants(self):
        self.assertRaises(DataError, Dataset, np.zeros((2, 1, 2, 2)), [0], 2, 'short')
        self.assertRaises(DataError, Dataset, np.zeros((2, 1, 2, 2)), [0, 2], 2, 'label')
        self.assertRaises(DataError, Dataset, np.full((1, 1, 2, 2), 1.5), [0], 2, 'pixel')
        self.assertRaises(DataError, Dataset, np.zeros((2, 4)), [0, 1], 2, 'flat')

        dataset = flat_dataset(4)
        self.assertFalse(dataset.images.flags.writeable)
        self.assertEqual((1, 2, 2), dataset.image_shape)
        self.assertEqual([1, 1, 1, 1, 0, 0, 0, 0, 0, 0], list(dataset.class_counts()))
        self.assertEqual(dataset.content_hash(), flat_dataset(4).content_hash())

    def test_rounded_count(self):
        self.assertEqual(25, rounded_count(0.0005, 50000))
        self.assertEqual(5, rounded_count(0.0001, 50000))
        self.assertEqual(1, rounded_count(0.0001, 100))
        self.assertEqual(5000, rounded_count(0.1, 50000))


class TestCifar10(TestCase):

    def test_read_batch(self):
        with TempDirectory() as tmp_dir:
            path = tmp_dir.write('data_batch_1.bin', cifar_records([3, 9, 0]) + cifar_records([1], pixel=255))
            dataset = read_cifar10_batch(path)
        self.assertEqual(4, len(dataset))
        self.assertEqual([3, 9, 0, 1], list(dataset.labels))
        self.assertEqual((3, 32, 32), dataset.image_shape)
        self.assertEqual(0.0, dataset.images[0].max())
        self.assertEqual(1.0, dataset.images[3].min())

    def test_channel_planar_layout(self):
        records = np.zeros((1, 3073), dtype=np.uint8)
        records[0, 1 + 1024 + 5] = 255  # green plane, row 0, column 5
        with TempDirectory() as tmp_dir:
            dataset = read_cifar10_batch(tmp_dir.write('test_batch.bin', records.tobytes()))
        self.assertEqual(1.0, dataset.images[0, 1, 0, 5])
        self.assertEqual(1.0, dataset.images.sum())

    def test_errors(self):
        with TempDirectory() as tmp_dir:
            missing = os.path.join(tmp_dir.path, 'data_batch_9.bin')
            with self.assertRaises(DatasetIOError) as context:
                read_cifar10_batch(missing)
            self.assertEqual(missing, context.exception.filename)

            truncated = tmp_dir.write('truncated.bin', cifar_records([1, 2]) + b'\x01\x02\x03')
            with self.assertRaises(DatasetIOError) as context:
                read_cifar10_batch(truncated)
            self.assertEqual(2 * 3073, context.exception.offset)
            self.assertIn('truncated.bin', str(context.exception))

            bad_label = tmp_dir.write('label.bin', cifar_records([1, 10]))
            self.assertRaises(FormatError, read_cifar10_batch, bad_label)

    def test_load_directory(self):
        with TempDirectory() as tmp_dir:
            nested = 'cifar-10-batches-bin/{}'
            for idx in range(1, 6):
                tmp_dir.write(nested.format(f'data_batch_{idx}.bin'), cifar_records([idx, idx]))
            tmp_dir.write(nested.format('test_batch.bin'), cifar_records([7]))
            train_set = load_cifar10(tmp_dir.path, 'train')
            test_set = load_cifar10(tmp_dir.path, 'test')
        self.assertEqual(10, len(train_set))
        self.assertEqual([1, 1, 2, 2, 3, 3, 4, 4, 5, 5], list(train_set.labels))
        self.assertEqual([7], list(test_set.labels))
        self.assertRaises(ConfigError, load_cifar10, '.', 'validation')

    @unittest.skipUnless(os.environ.get(CIFAR10_ENV), f'set {CIFAR10_ENV} to the CIFAR-10 binary batches')
    def test_full_distribution(self):
        """
        Requires the CIFAR-10 binary distribution; specify its directory in the environment variable
        SHADOWPRINT_CIFAR10_DIR.
        """
        directory = os.environ.get(CIFAR10_ENV)
        self.assertEqual(50000, len(load_cifar10(directory, 'train')))
        self.assertEqual(10000, len(load_cifar10(directory, 'test')))


class TestSynthBlobs(TestCase):

    def test_noise_free(self):
        dataset = synth_blobs(4, 5, 8, 0.0, seed=0)
        self.assertEqual(20, len(dataset))
        self.assertEqual((3, 8, 8), dataset.image_shape)
        for label in range(4):
            images = dataset.images[dataset.labels == label]
            self.assertTrue(np.all(images == images[0]))
        self.assertFalse(np.array_equal(dataset.images[0], dataset.images[5]))

    def test_determinism(self):
        first = synth_blobs(8, 10, 32, 0.15, seed=3)
        second = synth_blobs(8, 10, 32, 0.15, seed=3)
        self.assertEqual(first.content_hash(), second.content_hash())
        self.assertNotEqual(first.content_hash(), synth_blobs(8, 10, 32, 0.15, seed=4).content_hash())
        self.assertGreaterEqual(first.images.min(), 0.0)
        self.assertLessEqual(first.images.max(), 1.0)

    def test_auxiliary_domain(self):
        victim = synth_blobs(8, 20, 16, 0.15, seed=1, pattern_seed=0)
        auxiliary = synth_blobs(8, 20, 16, 0.15, seed=2, pattern_seed=1)
        assert_disjoint(victim, auxiliary)
        self.assertRaises(ConfigError, assert_disjoint, victim, victim.subset([0, 1]))

    def test_invalid_sizes(self):
        self.assertRaises(ConfigError, synth_blobs, 17, 5, 8, 0.1, 0)
        self.assertRaises(ConfigError, synth_blobs, 4, 5, 7, 0.1, 0)
        self.assertRaises(ConfigError, synth_blobs, 4, 0, 8, 0.1, 0)
        self.assertRaises(ConfigError, synth_blobs, 4, 5, 8, -0.1, 0)
        with self.assertRaises(ConfigError) as context:
            synth_blobs(4, 5, 8, 0.1, 0, channels=0)
        self.assertEqual('synth_blobs: per_class and channels must be positive, got 5 and 0', str(context.exception))


class TestSampling(TestCase):

    def test_sample_subset(self):
        dataset = flat_dataset(50)
        full = sample_subset(dataset, SubsetSpec('flat', 1.0, seed=1))
        self.assertEqual(sorted(dataset.images[:, 0, 0, 0]), sorted(full.images[:, 0, 0, 0]))

        tenth = sample_subset(dataset, SubsetSpec('flat', 0.1, seed=1))
        self.assertEqual(5, len(tenth))
        self.assertEqual(tenth.content_hash(), sample_subset(dataset, SubsetSpec('flat', 0.1, seed=1)).content_hash())

        filtered = sample_subset(dataset, SubsetSpec('flat', 0.5, seed=2, class_filter=3))
        self.assertTrue(np.all(filtered.labels == 3))

        tiny = sample_subset(dataset, SubsetSpec('flat', 0.001, seed=2))
        self.assertEqual(1, len(tiny))

    def test_sample_subset_errors(self):
        dataset = flat_dataset(5)
        self.assertRaises(ConfigError, SubsetSpec, 'flat', 0.0)
        self.assertRaises(ConfigError, SubsetSpec, 'flat', 1.5)
        self.assertRaises(ConfigError, sample_subset, dataset, SubsetSpec('flat', 1.0, class_filter=7))
        self.assertRaises(ConfigError, sample_subset, dataset, SubsetSpec('other', 1.0))

    def test_split(self):
        dataset = flat_dataset(1000)
        first, second = split(dataset, 0.8, seed=4)
        self.assertEqual(800, len(first))
        self.assertEqual(200, len(second))

        markers = lambda part: set(np.round(part.images[:, 0, 0, 0] * 999).astype(int))  # noqa: E731
        self.assertEqual(set(range(1000)), markers(first) | markers(second))
        self.assertEqual(set(), markers(first) & markers(second))

        again, _ = split(dataset, 0.8, seed=4)
        self.assertEqual(first.content_hash(), again.content_hash())

        for fraction in (0.0, 1.0, 0.0001):
            self.assertRaises(ConfigError, split, dataset, fraction, 4)


class TestPersistence(TestCase):

    def test_save_load(self):
        dataset = synth_blobs(3, 4, 8, 0.1, seed=0, name='persisted')
        with TempDirectory() as tmp_dir:
            path = os.path.join(tmp_dir.path, 'dataset.npz')
            save_dataset(path, dataset)
            loaded = load_dataset(path)
            self.assertRaises(DatasetIOError, load_dataset, os.path.join(tmp_dir.path, 'absent.npz'))

            manifest_path = os.path.join(tmp_dir.path, 'manifest.json')
            write_manifest(manifest_path, dataset_manifest(dataset, seed=5, sources=['synth']))
            with open(manifest_path, 'r', encoding='utf-8') as fh:
                manifest = json.load(fh)

        self.assertEqual('persisted', loaded.name)
        self.assertEqual(dataset.content_hash(), loaded.content_hash())
        self.assertEqual(12, manifest['size'])
        self.assertEqual(5, manifest['seed'])
        self.assertEqual(dataset.image_hash(), manifest['source_hashes']['images'])
