# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import logging
import math
import os
import unittest
from unittest import TestCase

import numpy as np
from testfixtures import (
    LogCapture,
    TempDirectory
)

from shadowprint.attack import (
    AttackConfig,
    AttackMode,
    PoisonManifest,
    Scenario,
    Trigger,
    blend,
    blend_tensor,
    cluster_loss,
    dump_image_pairs,
    embed_triggered,
    load_trigger,
    mean_pairwise_cosine,
    optimize_trigger,
    poison_dataset,
    resolve_surrogate_spec,
    save_trigger,
    select_poison_indices,
    train_surrogate,
    trigger_hash,
    write_ppm
)
from shadowprint.data import (
    Dataset,
    split,
    synth_blobs
)
from shadowprint.misc import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    NumericError
)
from shadowprint.models import (
    build_model,
    get_spec,
    predict,
    predict_logits
)
from shadowprint.tensor import (
    Tape,
    Tensor,
    backward,
    precision,
    functional as F
)
from shadowprint.training import (
    TrainConfig,
    accuracy
)

SLOW_ENV = 'SHADOWPRINT_SLOW_TESTS'


def attack_config(**kwargs):
    settings = dict(mode=AttackMode.DIRTY_LABEL, scenario=Scenario.A1_WHITE_BOX, poison_rate=0.01,
                    trigger_weight=0.3, target_label=0, steps=0, surrogate_spec='SmallMLP', seed=5)
    settings.update(kwargs)
    return AttackConfig(**settings)


def labelled_zeros(count, num_classes=10):
    return Dataset(np.zeros((count, 1, 1, 1)), np.arange(count) % num_classes, num_classes, 'zeros')


def small_surrogate(num_classes=4):
    spec = get_spec('SmallMLP', num_classes=num_classes, input_shape=(3, 8, 8))
    return build_model(spec, 1), spec


class TestAttackConfig(TestCase):

    def test_validation(self):
        self.assertRaises(ConfigError, attack_config, scenario=Scenario.A3_DATA_FREE)
        attack_config(scenario='a3', mode='data_free')
        for bad in [dict(poison_rate=0.0), dict(poison_rate=1.0), dict(trigger_weight=0.0),
                    dict(trigger_weight=1.5), dict(steps=-1), dict(batch_size=0), dict(lr=0.0),
                    dict(surrogate_spec='ResNet18'), dict(target_label=-1), dict(mode='patch')]:
            self.assertRaises(ConfigError, attack_config, **bad)

    def test_target_term_weight(self):
        self.assertEqual(0.0, attack_config().target_term_weight)
        self.assertEqual(1.0, attack_config(mode='clean_label').target_term_weight)
        self.assertEqual(0.0, attack_config(mode='clean_label', target_loss_weight=0.0).target_term_weight)
        self.assertEqual(0.5, attack_config(target_loss_weight=0.5).target_term_weight)
        self.assertEqual(0.0, attack_config(scenario='a3', mode='data_free').target_term_weight)
        self.assertRaises(ConfigError, attack_config, target_loss_weight=-1.0)
        self.assertRaises(ConfigError, attack_config, scenario='a3', mode='data_free', target_loss_weight=1.0)
        self.assertIsNone(attack_config(mode='clean_label').to_dict()['target_loss_weight'])

    def test_parse(self):
        self.assertEqual(Scenario.A1_WHITE_BOX, Scenario.parse('A1_WHITE_BOX'))
        self.assertEqual(Scenario.A2_BLACK_BOX, Scenario.parse('a2'))
        self.assertEqual(AttackMode.CLEAN_LABEL, AttackMode.parse(' Clean_Label '))

        snapshot = attack_config(trigger_weight=0.2).to_dict()
        self.assertEqual('dirty_label', snapshot['mode'])
        self.assertEqual('a1', snapshot['scenario'])
        self.assertEqual('last_fc_output', snapshot['embedding_tap'])
        self.assertEqual(0.2, snapshot['trigger_weight'])


class TestBlend(TestCase):

    def test_examples(self):
        x = np.full((1, 2, 2), 0.4)
        t = np.full((1, 2, 2), 0.8)
        np.testing.assert_allclose(np.full((1, 2, 2), 0.6), blend(x, t, 0.5), atol=1e-12)

        rng = np.random.default_rng(0)
        x = rng.random((2, 3, 4, 4))
        t = rng.normal(0.5, 1.0, size=(3, 4, 4))
        self.assertLess(np.abs(blend(x, t, 1e-9) - x).max(), 1e-6)
        np.testing.assert_array_equal(np.clip(t, 0.0, 1.0)[None].repeat(2, axis=0), blend(x, t, 1.0))

    def test_scalar_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            x, t, w = rng.random(), rng.uniform(-0.5, 1.5), rng.uniform(1e-6, 1.0)
            expected = min(max(x * (1 - w) + t * w, 0.0), 1.0)
            out = blend(np.full((1, 1, 1), x), np.full((1, 1, 1), t), w)
            self.assertAlmostEqual(expected, out[0, 0, 0], delta=1e-7)

    def test_trigger_idempotence(self):
        t = np.random.default_rng(2).random((3, 4, 4))
        for w in (0.1, 0.5, 1.0):
            np.testing.assert_allclose(t, blend(t, t, w), atol=1e-12)

    def test_dtype_and_errors(self):
        images = np.zeros((2, 3, 4, 4), dtype=np.float32)
        trigger = Trigger(np.ones((3, 4, 4)), init_seed=0, steps_trained=0)
        self.assertEqual(np.float32, blend(images, trigger, 0.3).dtype)
        self.assertRaises(DimensionError, blend, images, np.ones((3, 5, 5)), 0.3)
        self.assertRaises(ConfigError, blend, images, trigger, 0.0)
        self.assertRaises(ConfigError, blend, images, trigger, 1.5)

    def test_blend_tensor(self):
        rng = np.random.default_rng(3)
        x, t = rng.random((2, 3, 4, 4)), rng.normal(0.5, 1.0, size=(3, 4, 4))
        with precision(np.float64):
            out = blend_tensor(Tensor(x), Tensor(t), 0.3)
        np.testing.assert_allclose(blend(x, t, 0.3), out.data, atol=1e-12)


class TestClusterLoss(TestCase):

    def loss(self, rows):
        with precision(np.float64):
            return cluster_loss(Tensor(rows)).item()

    def test_examples(self):
        self.assertAlmostEqual(-0.5, self.loss([[1.0, 0.0], [1.0, 0.0]]), delta=1e-6)
        self.assertAlmostEqual(0.0, self.loss([[1.0, 0.0], [0.0, 1.0]]), delta=1e-6)
        diagonal = 1 / math.sqrt(2)
        self.assertAlmostEqual(-0.31427, self.loss([[1.0, 0.0], [0.0, 1.0], [diagonal, diagonal]]), delta=1e-5)
        self.assertAlmostEqual(-(2 * (0 + diagonal + diagonal)) / 9,
                               self.loss([[1.0, 0.0], [0.0, 1.0], [diagonal, diagonal]]), delta=1e-6)

        for count in (2, 4, 16):
            rows = np.tile([0.3, -1.2, 2.0], (count, 1))
            self.assertAlmostEqual(-(1 - 1 / count), self.loss(rows), delta=1e-6)

    def test_properties(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            count = int(rng.integers(2, 9))
            rows = rng.normal(size=(count, 5))
            value = self.loss(rows)
            bound = 1 - 1 / count
            self.assertLessEqual(value, bound + 1e-12)
            self.assertGreaterEqual(value, -bound - 1e-12)
            self.assertAlmostEqual(value, self.loss(rows[rng.permutation(count)]), delta=1e-12)
            scaled = rows * rng.uniform(0.1, 10.0, size=(count, 1))
            self.assertAlmostEqual(value, self.loss(scaled), delta=1e-12)
            self.assertAlmostEqual(-value * count / (count - 1), mean_pairwise_cosine(rows), delta=1e-12)

    def test_gradient(self):
        for seed in range(10):
            rows = np.random.default_rng(seed).normal(size=(4, 3))
            with precision(np.float64):
                z = Tensor(rows, requires_grad=True)
                with Tape():
                    loss = cluster_loss(z)
                backward(loss)
                numeric = F.numerical_gradient(lambda values: cluster_loss(Tensor(values)).item(), rows)
            error = np.linalg.norm(z.grad - numeric) / max(np.linalg.norm(z.grad) + np.linalg.norm(numeric), 1e-12)
            self.assertLess(error, 1e-4)

    def test_errors(self):
        with self.assertRaises(NumericError) as context:
            self.loss([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        self.assertIn('row 1', str(context.exception))
        self.assertRaises(ContractError, self.loss, [[1.0, 0.0]])
        self.assertRaises(DimensionError, self.loss, [1.0, 0.0])


class TestOptimizeTrigger(TestCase):

    def test_no_steps(self):
        params, spec = small_surrogate()
        data = synth_blobs(4, 5, 8, 0.1, seed=0)
        trigger = optimize_trigger(params, spec, data, attack_config(steps=0, seed=5))
        expected = np.random.default_rng(5).normal(0.0, 0.5, size=(3, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(expected, trigger.pattern)
        self.assertEqual(0, trigger.steps_trained)
        self.assertEqual(5, trigger.init_seed)
        self.assertEqual(1, len(trigger.loss_trace))

        wider = optimize_trigger(params, spec, data, attack_config(steps=0, seed=5, init_std=1.0))
        np.testing.assert_allclose(2 * trigger.pattern, wider.pattern, rtol=1e-6)

    def test_surrogate_unchanged(self):
        params, spec = small_surrogate()
        before = params.checksum()
        data = synth_blobs(4, 10, 8, 0.1, seed=0)
        trigger = optimize_trigger(params, spec, data, attack_config(steps=2, batch_size=16))
        self.assertEqual(before, params.checksum())
        self.assertEqual(2, trigger.steps_trained)
        self.assertEqual(3, len(trigger.loss_trace))
        self.assertEqual((3, 8, 8), trigger.shape)

        again = optimize_trigger(params, spec, data, attack_config(steps=2, batch_size=16))
        np.testing.assert_array_equal(trigger.pattern, again.pattern)

    def test_single_sample_batch(self):
        params, spec = small_surrogate()
        data = synth_blobs(5, 1, 8, 0.1, seed=0)
        with LogCapture(level=logging.WARNING) as log_cap:
            optimize_trigger(params, spec, data, attack_config(steps=1, batch_size=4))
            log_cap.check(
                ('root', 'WARNING', 'Skipping trigger batch of size 1 in epoch 1'),
            )

    def test_errors(self):
        params, spec = small_surrogate()
        self.assertRaises(DimensionError, optimize_trigger, params, spec, synth_blobs(4, 2, 16, 0.1, seed=0),
                          attack_config())
        empty = synth_blobs(4, 1, 8, 0.1, seed=0).subset([])
        self.assertRaises(ContractError, optimize_trigger, params, spec, empty, attack_config())
        self.assertRaises(ConfigError, optimize_trigger, params, spec, synth_blobs(4, 2, 8, 0.1, seed=0),
                          attack_config(mode='clean_label', target_label=4))

    def test_target_term(self):
        params, spec = small_surrogate()
        data = synth_blobs(4, 5, 8, 0.1, seed=0)
        settings = dict(mode='clean_label', target_label=2, steps=40, batch_size=20, lr=0.1)
        targeted = optimize_trigger(params, spec, data, attack_config(**settings))
        plain = optimize_trigger(params, spec, data, attack_config(target_loss_weight=0.0, **settings))

        def target_cross_entropy(trigger):
            logits = predict_logits(params, spec, blend(data.images, trigger, 0.3)).astype(np.float64)
            shifted = logits - logits.max(axis=1, keepdims=True)
            return float(np.mean(np.log(np.exp(shifted).sum(axis=1)) - shifted[:, 2]))

        self.assertLess(target_cross_entropy(targeted), target_cross_entropy(plain))
        self.assertGreaterEqual(np.mean(predict(params, spec, blend(data.images, targeted, 0.3)) == 2), 0.9)
        self.assertLess(targeted.loss_trace[-1], targeted.loss_trace[0])

    @unittest.skipUnless(os.environ.get(SLOW_ENV) == '1', f'set {SLOW_ENV}=1 to run training tests')
    def test_clustering_premise(self):
        train_set = synth_blobs(8, 50, 32, 0.15, seed=10)
        held_out = synth_blobs(8, 8, 32, 0.15, seed=11)
        config = attack_config(steps=30, batch_size=64, lr=0.01, surrogate_spec='SmallCNN_A', seed=3)
        surrogate, spec = train_surrogate(config, train_set, train_config=TrainConfig(epochs=5, seed=3))

        initial = optimize_trigger(surrogate, spec, train_set, attack_config(
            steps=0, batch_size=64, surrogate_spec='SmallCNN_A', seed=3))
        trigger = optimize_trigger(surrogate, spec, train_set, config)

        before = mean_pairwise_cosine(embed_triggered(surrogate, spec, held_out.images, initial, 0.3))
        after = mean_pairwise_cosine(embed_triggered(surrogate, spec, held_out.images, trigger, 0.3))
        self.assertGreaterEqual(after, 0.9)
        self.assertGreater(after, before)
        self.assertLessEqual(trigger.loss_trace[-1], trigger.loss_trace[1])


class TestTriggerFile(TestCase):

    def test_round_trip(self):
        trigger = Trigger(np.random.default_rng(0).normal(size=(3, 4, 4)).astype(np.float32), 9, 30)
        with TempDirectory() as tmp_dir:
            path = os.path.join(tmp_dir.path, 'trigger.sptrig')
            save_trigger(path, trigger)
            with open(path, 'rb') as fh:
                raw = fh.read()
            loaded = load_trigger(path)

            trailing = tmp_dir.write('trailing.sptrig', raw + b'\x00')
            self.assertRaises(FormatError, load_trigger, trailing)
            truncated = tmp_dir.write('truncated.sptrig', raw[:-3])
            self.assertRaises(FormatError, load_trigger, truncated)
            bad = tmp_dir.write('bad.sptrig', b'SPMODEL1' + raw[8:])
            self.assertRaises(FormatError, load_trigger, bad)

        self.assertEqual(b'SPTRIG1\0', raw[:8])
        self.assertEqual(8 + 4 * 4 + 4 * 48 + 16, len(raw))
        np.testing.assert_array_equal(trigger.pattern, loaded.pattern)
        self.assertEqual((9, 30), (loaded.init_seed, loaded.steps_trained))
        self.assertEqual(trigger_hash(trigger), trigger_hash(loaded))

    def test_invariants(self):
        self.assertRaises(DimensionError, Trigger, np.zeros((4, 4)), 0, 0)
        self.assertRaises(NumericError, Trigger, np.full((1, 2, 2), np.inf), 0, 0)
        self.assertRaises(ContractError, Trigger, np.zeros((1, 2, 2)), 0, -1)


class TestPoisoning(TestCase):

    def test_poison_counts(self):
        dataset = labelled_zeros(50000)
        self.assertEqual(25, len(select_poison_indices(dataset, attack_config(poison_rate=0.0005), seed=1)))
        self.assertEqual(5, len(select_poison_indices(dataset, attack_config(poison_rate=0.0001), seed=1)))

        chosen = select_poison_indices(dataset, attack_config(poison_rate=0.001, mode='clean_label',
                                                              target_label=3), seed=1)
        self.assertEqual(50, len(chosen))
        self.assertTrue(np.all(dataset.labels[chosen] == 3))
        np.testing.assert_array_equal(np.sort(chosen), chosen)

    def test_clean_label_cap(self):
        dataset = labelled_zeros(100)
        with LogCapture() as log_cap:
            chosen = select_poison_indices(dataset, attack_config(poison_rate=0.5, mode='clean_label'), seed=0)
            log_cap.check(
                ('root', 'WARNING', 'Poison count 50 exceeds the 10 samples of class 0; poisoning all of them'),
            )
        self.assertEqual(10, len(chosen))

    def test_selection_errors(self):
        dataset = labelled_zeros(20, num_classes=10)
        self.assertRaises(ConfigError, select_poison_indices, dataset, attack_config(target_label=10), 0)
        no_target = Dataset(np.zeros((4, 1, 1, 1)), [1, 2, 3, 4], 10, 'no-target')
        self.assertRaises(ConfigError, select_poison_indices, no_target, attack_config(mode='clean_label'), 0)

    def test_minimum_count(self):
        dataset = synth_blobs(10, 10, 8, 0.1, seed=0)
        trigger = Trigger(np.full((3, 8, 8), 0.5), 0, 0)
        poisoned, manifest = poison_dataset(dataset, trigger, attack_config(poison_rate=0.001), seed=2)
        changed = np.flatnonzero(np.any(poisoned.images != dataset.images, axis=(1, 2, 3)))
        self.assertEqual(1, len(manifest))
        self.assertEqual(list(manifest.poisoned_indices), list(changed))

        untouched = np.setdiff1d(np.arange(len(dataset)), changed)
        np.testing.assert_array_equal(dataset.images[untouched], poisoned.images[untouched])
        np.testing.assert_array_equal(dataset.labels[untouched], poisoned.labels[untouched])

    def test_manifest_audit(self):
        dataset = synth_blobs(10, 100, 8, 0.1, seed=0)
        trigger = Trigger(np.random.default_rng(1).normal(0.5, 0.5, size=(3, 8, 8)), 1, 0)
        for mode in (AttackMode.DIRTY_LABEL, AttackMode.CLEAN_LABEL, AttackMode.DATA_FREE):
            scenario = Scenario.A3_DATA_FREE if mode == AttackMode.DATA_FREE else Scenario.A2_BLACK_BOX
            config = attack_config(mode=mode, scenario=scenario, poison_rate=0.05, target_label=4)
            poisoned, manifest = poison_dataset(dataset, trigger, config, seed=3)

            self.assertEqual(50, len(manifest))
            self.assertEqual(len(manifest.poisoned_indices), len(manifest.original_labels))
            self.assertEqual(len(manifest.poisoned_indices), len(manifest.assigned_labels))
            indices = list(manifest.poisoned_indices)
            self.assertEqual(sorted(indices), indices)
            np.testing.assert_array_equal(dataset.labels[indices], manifest.original_labels)
            np.testing.assert_array_equal(poisoned.labels[indices], manifest.assigned_labels)
            if mode == AttackMode.CLEAN_LABEL:
                self.assertEqual(manifest.original_labels, manifest.assigned_labels)
                self.assertTrue(all(label == 4 for label in manifest.original_labels))
            else:
                self.assertTrue(all(label == 4 for label in manifest.assigned_labels))

            changed = np.flatnonzero(np.any(poisoned.images != dataset.images, axis=(1, 2, 3))
                                     | (poisoned.labels != dataset.labels))
            self.assertEqual(indices, list(changed))
            self.assertEqual(trigger_hash(trigger), manifest.trigger_hash)
            self.assertEqual(mode.value, manifest.config_snapshot['mode'])

    def test_manifest_file(self):
        dataset = synth_blobs(4, 10, 8, 0.1, seed=0)
        trigger = Trigger(np.full((3, 8, 8), 0.9), 0, 0)
        _, manifest = poison_dataset(dataset, trigger, attack_config(poison_rate=0.1), seed=0)
        with TempDirectory() as tmp_dir:
            path = os.path.join(tmp_dir.path, 'poison_manifest.json')
            manifest.save(path)
            loaded = PoisonManifest.load(path)
        self.assertEqual(manifest, loaded)

        self.assertRaises(ContractError, PoisonManifest, [3, 1], [0, 0], [0, 0], '', {})
        self.assertRaises(DimensionError, PoisonManifest, [1, 3], [0], [0, 0], '', {})

    def test_shape_mismatch(self):
        dataset = synth_blobs(4, 10, 8, 0.1, seed=0)
        trigger = Trigger(np.zeros((3, 16, 16)), 0, 0)
        self.assertRaises(DimensionError, poison_dataset, dataset, trigger, attack_config(), 0)


class TestImageDump(TestCase):

    def test_write_ppm(self):
        image = np.array([[[0.0, 1.0], [0.5, 0.2]]], dtype=np.float32)
        with TempDirectory() as tmp_dir:
            path = os.path.join(tmp_dir.path, 'gray.ppm')
            write_ppm(path, image)
            with open(path, 'rb') as fh:
                raw = fh.read()
            self.assertRaises(DimensionError, write_ppm, path, np.zeros((2, 2, 2)))
        header = b'P6\n2 2\n255\n'
        self.assertEqual(header, raw[:len(header)])
        self.assertEqual(bytes([0, 0, 0, 255, 255, 255, 128, 128, 128, 51, 51, 51]), raw[len(header):])

    def test_dump_pairs(self):
        dataset = synth_blobs(4, 10, 8, 0.1, seed=0)
        trigger = Trigger(np.full((3, 8, 8), 0.9), 0, 0)
        poisoned, manifest = poison_dataset(dataset, trigger, attack_config(poison_rate=0.2), seed=0)
        with TempDirectory() as tmp_dir:
            out_dir = os.path.join(tmp_dir.path, 'images')
            paths = dump_image_pairs(dataset, poisoned, manifest, out_dir, 3)
            self.assertEqual(6, len(os.listdir(out_dir)))
        first = manifest.poisoned_indices[0]
        self.assertTrue(paths[0].endswith(f'{first:06d}_clean.ppm'))
        self.assertTrue(paths[1].endswith(f'{first:06d}_poisoned.ppm'))


class TestSurrogate(TestCase):

    def test_resolve_spec(self):
        data = synth_blobs(4, 5, 8, 0.1, seed=0)
        victim = get_spec('SmallCNN_A', num_classes=4, input_shape=(3, 8, 8))

        spec = resolve_surrogate_spec(attack_config(surrogate_spec='SmallCNN_A'), data, victim)
        self.assertEqual('SmallCNN_A', spec.name)
        self.assertEqual((3, 8, 8), spec.input_shape)
        self.assertRaises(ConfigError, resolve_surrogate_spec, attack_config(surrogate_spec='SmallMLP'), data,
                          victim)

        with LogCapture() as log_cap:
            resolve_surrogate_spec(attack_config(scenario='a2', surrogate_spec='SmallCNN_A'), data, victim)
            log_cap.check(
                ('root', 'WARNING', 'Scenario a2 uses the victim architecture SmallCNN_A as surrogate'),
            )

    def test_train_surrogate(self):
        data = synth_blobs(4, 5, 8, 0.1, seed=0)
        params, spec = train_surrogate(attack_config(scenario='a2'), data, train_config=TrainConfig(epochs=1))
        self.assertEqual('SmallMLP', spec.name)
        self.assertEqual(4, spec.num_classes)
        self.assertRaises(ContractError, train_surrogate, attack_config(), data.subset([]))

    @unittest.skipUnless(os.environ.get(SLOW_ENV) == '1', f'set {SLOW_ENV}=1 to run training tests')
    def test_surrogate_accuracy(self):
        data = synth_blobs(8, 100, 32, 0.15, seed=20)
        own_train, own_test = split(data, 0.8, seed=1)
        config = attack_config(scenario='a2', surrogate_spec='SmallCNN_B', surrogate_epochs=5)
        params, spec = train_surrogate(config, own_train)
        self.assertGreaterEqual(accuracy(params, spec, own_test), 0.9)
