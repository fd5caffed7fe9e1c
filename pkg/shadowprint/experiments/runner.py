# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
import json
import logging
import os
import threading
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import (
    dataclass,
    replace
)

import numpy as np
import pandas as pd

from shadowprint.attack import (
    Scenario,
    blend,
    dump_image_pairs,
    optimize_trigger,
    poison_dataset,
    save_trigger,
    train_surrogate
)
from shadowprint.data import (
    SubsetSpec,
    assert_disjoint,
    load_cifar10,
    sample_subset,
    split,
    synth_blobs
)
from shadowprint.defense import (
    activation_cluster_detector,
    compute_ddr,
    gram_anomaly_detector,
    scale_consistency_detector
)
from shadowprint.misc.errors import (
    ConfigError,
    ShadowPrintError
)
from shadowprint.misc.get_env import get_env_int
from shadowprint.models import get_spec
from shadowprint.training import (
    evaluate_asr,
    evaluate_ca,
    train
)

REPORT_COLUMNS = ('scenario', 'mode', 'victim', 'surrogate', 'poison_rate', 'trigger_weight', 'train_scale',
                  'baseline_ca', 'ca', 'asr', 'ddr_scale', 'ddr_gram', 'ddr_cluster', 'seed', 'runtime_s')
METRICS = ('baseline_ca', 'ca', 'asr', 'ddr_scale', 'ddr_gram', 'ddr_cluster')
REPORT_FILE = 'report.csv'
BASELINE_FILE = 'baseline.csv'
THREADS_ENV = 'SHADOWPRINT_THREADS'

DataBundle = namedtuple('DataBundle', ['train', 'test', 'aux'])


def derive_seed(master_seed, coordinates, stage):
    """
    Seed for one stage of one trial, a pure function of its arguments
    :param master_seed: experiment master seed
    :param coordinates: grid coordinates (and repeat index) of the trial
    :param stage: stage name, e.g. 'surrogate'
    :return: integer in [0, 2**32)
    """
    key = json.dumps([int(master_seed), [float(c) for c in coordinates], str(stage)])
    return int.from_bytes(hashlib.sha256(key.encode('utf-8')).digest()[:4], 'little')


class TrialFailure(ShadowPrintError):
    """ A trial stage raised; carries the stage name """

    def __init__(self, stage, cause):
        super().__init__(f'Stage {stage} failed: {cause}')
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name):
    try:
        yield
    except TrialFailure:
        raise
    except Exception as exc:
        raise TrialFailure(name, exc) from exc


def _format(value):
    if value is None:
        return 'NA'
    if isinstance(value, float):
        return f'{value:.6f}'
    return str(value)


@dataclass(frozen=True)
class ReportRow:
    """
    One grid point; metric cells hold a float, None (not computed) or 'failed:<stage>'
    """
    scenario: str
    mode: str
    victim: str
    surrogate: str
    poison_rate: float
    trigger_weight: float
    train_scale: float
    baseline_ca: object
    ca: object
    asr: object
    ddr_scale: object
    ddr_gram: object
    ddr_cluster: object
    seed: int
    runtime_s: float

    def __post_init__(self):
        for name in ('ca', 'asr', 'ddr_scale', 'ddr_gram', 'ddr_cluster'):
            value = getattr(self, name)
            if isinstance(value, float) and not 0.0 <= value <= 1.0:
                raise ConfigError(f'Report cell {name} = {value} outside [0, 1]')

    @property
    def failed(self):
        return any(isinstance(getattr(self, name), str) for name in METRICS)

    def cells(self):
        return [_format(getattr(self, column)) for column in REPORT_COLUMNS]


class ReportWriter:
    """
    CSV report with a fixed header; rows are appended as they complete
    """

    def __init__(self, filename, columns=REPORT_COLUMNS):
        self.filename = filename
        self.columns = list(columns)
        pd.DataFrame(columns=self.columns).to_csv(filename, index=False)

    def append(self, rows):
        frame = pd.DataFrame([row.cells() for row in rows], columns=self.columns)
        frame.to_csv(self.filename, mode='a', header=False, index=False)


def _subset(dataset, size, seed):
    if size <= 0 or size >= len(dataset):
        return dataset
    return sample_subset(dataset, SubsetSpec(dataset.name, size / len(dataset), seed=seed))


def prepare_data(config):
    """
    Victim training/test sets and, for scenario A3, the disjoint auxiliary set
    :return: DataBundle
    """
    master = config.master_seed
    if config.dataset_name == 'cifar10':
        directory = config['dataset.cifar10_dir']
        full_train = load_cifar10(directory, 'train')
        train_set = _subset(full_train, config.dataset_int('train_size'), derive_seed(master, (), 'data.train'))
        test_set = _subset(load_cifar10(directory, 'test'), config.dataset_int('test_size'),
                           derive_seed(master, (), 'data.test'))
        aux = None
        if config.scenario == Scenario.A3_DATA_FREE:
            if len(train_set) == len(full_train):
                raise ConfigError('Scenario A3 on cifar10 needs dataset.train_size to leave auxiliary records')
            # cifar10 has no disjoint domain of its own; the records outside the victim subset serve instead
            chosen = {row.tobytes() for row in train_set.images.reshape(len(train_set), -1)}
            rest = [idx for idx, row in enumerate(full_train.images.reshape(len(full_train), -1))
                    if row.tobytes() not in chosen]
            aux = full_train.subset(rest, name='cifar10-auxiliary')
        return DataBundle(train_set, test_set, aux)

    num_classes = config.dataset_int('num_classes')
    image_size = config.dataset_int('image_size')
    noise_std = config.dataset_float('noise_std')
    pattern_seed = config.dataset_int('pattern_seed')
    train_set = synth_blobs(num_classes, config.dataset_int('per_class'), image_size, noise_std,
                            seed=derive_seed(master, (), 'data.train'), pattern_seed=pattern_seed,
                            name='synth-train')
    test_set = synth_blobs(num_classes, config.dataset_int('test_per_class'), image_size, noise_std,
                           seed=derive_seed(master, (), 'data.test'), pattern_seed=pattern_seed,
                           name='synth-test')
    aux = None
    if config.scenario == Scenario.A3_DATA_FREE:
        aux = synth_blobs(num_classes, config.dataset_int('per_class'), image_size, noise_std,
                          seed=derive_seed(master, (), 'data.aux'),
                          pattern_seed=config.dataset_int('aux_pattern_seed'), name='synth-auxiliary')
    return DataBundle(train_set, test_set, aux)


def victim_spec_for(config, dataset):
    return get_spec(config.victim_spec, num_classes=dataset.num_classes, input_shape=dataset.image_shape)


def attacker_subset(config, data, train_scale, seed):
    """
    Attacker data: a train_scale sample of the victim training set (A1, A2) or of the auxiliary set (A3)
    """
    source = data.aux if config.scenario == Scenario.A3_DATA_FREE else data.train
    spec = SubsetSpec(source.name, train_scale, seed=seed)
    attacker_data = sample_subset(source, spec)
    if config.scenario == Scenario.A3_DATA_FREE:
        assert_disjoint(attacker_data, data.train)
    return attacker_data, spec


def baseline_run(victim_spec, dataset, train_config, seed, clean_test):
    """
    Clean training without poisoning
    :return: clean accuracy of the trained model on clean_test
    """
    params, _ = train(victim_spec, dataset, replace(train_config, seed=seed))
    return evaluate_ca(params, victim_spec, clean_test)


class BaselineCache:
    """
    Baseline accuracies keyed by (spec, dataset content, train config, test content)
    """

    _Entry = namedtuple('_Entry', ['lock', 'result'])

    def __init__(self):
        self._lock = threading.Lock()
        self._entries = {}

    def get(self, victim_spec, dataset, train_config, clean_test):
        key = (victim_spec.name, dataset.content_hash(), train_config, clean_test.content_hash())
        with self._lock:
            entry = self._entries.setdefault(key, BaselineCache._Entry(threading.Lock(), {}))
        with entry.lock:
            if 'ca' not in entry.result:
                start = time.perf_counter()
                entry.result['ca'] = baseline_run(victim_spec, dataset, train_config, train_config.seed,
                                                  clean_test)
                entry.result['runtime'] = time.perf_counter() - start
                logging.info(f'Baseline {victim_spec.name} (seed {train_config.seed}): '
                             f'CA {entry.result["ca"]:.4f}')
            return entry.result['ca']

    def rows(self):
        """
        Baseline report rows ordered by seed; ASR and detector cells are NA
        """
        with self._lock:
            items = [(key, dict(entry.result)) for key, entry in self._entries.items() if 'ca' in entry.result]
        rows = []
        for (name, _, train_config, _), result in sorted(items, key=lambda item: item[0][2].seed):
            rows.append(ReportRow('baseline', 'none', name, '', 0.0, 0.0, 0.0, result['ca'], result['ca'],
                                  None, None, None, None, train_config.seed, result['runtime']))
        return rows


def defense_metrics(config, params, spec, data, poisoned, manifest, trigger, attack_config, seed):
    """
    DDR of every configured detector against the triggered victim
    :return: dict detector name -> DDR
    """
    fpr = config.calibration_fpr
    target = attack_config.target_label
    reference, held = split(data.test, 0.5, seed)
    triggered = blend(held.images[held.labels != target], trigger, attack_config.trigger_weight)

    ddr = {}
    if 'scale' in config.defenses:
        ddr['scale'] = compute_ddr(scale_consistency_detector(params, spec, held, config.scales),
                                   scale_consistency_detector(params, spec, triggered, config.scales), fpr)
    if 'gram' in config.defenses:
        ddr['gram'] = compute_ddr(gram_anomaly_detector(params, spec, reference, held),
                                  gram_anomaly_detector(params, spec, reference, triggered), fpr)
    if 'cluster' in config.defenses:
        analysis = activation_cluster_detector(params, spec, poisoned, seed=seed)
        is_poisoned = np.zeros(len(poisoned), dtype=bool)
        is_poisoned[list(manifest.poisoned_indices)] = True
        ddr['cluster'] = compute_ddr(analysis.scores[~is_poisoned], analysis.scores[is_poisoned], fpr)
    return ddr


def craft_trigger(config, data, point, repeat=0):
    """
    Attacker side of a trial: attacker data, surrogate training and trigger optimisation
    :param point: (poison_rate, trigger_weight, train_scale)
    :return: tuple of (AttackConfig, Trigger, surrogate ModelSpec)
    :raises TrialFailure: a stage raised
    """
    poison_rate, trigger_weight, train_scale = point
    master = config.master_seed
    coordinates = tuple(point) + (repeat,)

    with stage('data'):
        victim_spec = victim_spec_for(config, data.train)
        attacker_data, subset_spec = attacker_subset(config, data, train_scale,
                                                     derive_seed(master, coordinates, 'attacker_data'))
        attack_config = config.attack_config(poison_rate, trigger_weight,
                                             derive_seed(master, coordinates, 'trigger'), subset_spec)
    with stage('surrogate'):
        surrogate_train = config.train_config(derive_seed(master, coordinates, 'surrogate'),
                                              epochs=attack_config.surrogate_epochs)
        surrogate, surrogate_spec = train_surrogate(attack_config, attacker_data, victim_spec, surrogate_train)
    with stage('trigger'):
        trigger = optimize_trigger(surrogate, surrogate_spec, attacker_data, attack_config)
    return attack_config, trigger, surrogate_spec


def poison_seed(config, point, repeat=0):
    return derive_seed(config.master_seed, tuple(point) + (repeat,), 'poison')


def victim_train_config(config, repeat=0):
    # victim and baseline share one training seed per repeat
    return config.train_config(derive_seed(config.master_seed, (repeat,), 'victim'))


def run_trial(config, data, point, repeat, baselines, trial_dir=None):
    """
    One attack trial: attacker data, surrogate, trigger, poisoning, victim training, evaluation, defenses
    :param point: (poison_rate, trigger_weight, train_scale)
    :param repeat: repeat index
    :param baselines: BaselineCache
    :param trial_dir: optional directory for the trial's JSON and trigger files
    :return: dict of metric name -> value
    :raises TrialFailure: a stage raised
    """
    trigger_weight = point[1]
    master = config.master_seed
    coordinates = tuple(point) + (repeat,)
    suffix = f'_r{repeat}'

    attack_config, trigger, surrogate_spec = craft_trigger(config, data, point, repeat)
    victim_spec = victim_spec_for(config, data.train)
    with stage('poison'):
        poisoned, manifest = poison_dataset(data.train, trigger, attack_config, poison_seed(config, point, repeat))
        if trial_dir is not None:
            os.makedirs(trial_dir, exist_ok=True)
            manifest.save(os.path.join(trial_dir, f'poison_manifest{suffix}.json'))
            save_trigger(os.path.join(trial_dir, f'trigger{suffix}.sptrig'), trigger)
            with open(os.path.join(trial_dir, f'trigger_trace{suffix}.json'), 'w', encoding='utf-8') as fh:
                json.dump({'loss_trace': list(trigger.loss_trace)}, fh, indent=2)
            if config.dump_images > 0:
                dump_image_pairs(data.train, poisoned, manifest, os.path.join(trial_dir, f'images{suffix}'),
                                 config.dump_images)

    victim_train = victim_train_config(config, repeat)
    with stage('victim'):
        victim, report = train(victim_spec, poisoned, victim_train)
        if trial_dir is not None:
            report.save(os.path.join(trial_dir, f'victim_report{suffix}.json'))
    with stage('baseline'):
        baseline_ca = baselines.get(victim_spec, data.train, victim_train, data.test)
    with stage('evaluate'):
        metrics = {
            'surrogate': surrogate_spec.name,
            'baseline_ca': baseline_ca,
            'ca': evaluate_ca(victim, victim_spec, data.test),
            'asr': evaluate_asr(victim, victim_spec, data.test, trigger, trigger_weight,
                                attack_config.target_label),
        }
    with stage('defense'):
        ddr = defense_metrics(config, victim, victim_spec, data, poisoned, manifest, trigger, attack_config,
                              derive_seed(master, coordinates, 'defense'))
    for name in ('scale', 'gram', 'cluster'):
        metrics[f'ddr_{name}'] = ddr.get(name)
    return metrics


def _point_row(config, point, values, surrogate, start):
    poison_rate, trigger_weight, train_scale = point
    return ReportRow(config.scenario.value, config.mode.value, config.victim_spec, surrogate,
                     poison_rate, trigger_weight, train_scale, values['baseline_ca'], values['ca'], values['asr'],
                     values['ddr_scale'], values['ddr_gram'], values['ddr_cluster'],
                     derive_seed(config.master_seed, point, 'trial'), time.perf_counter() - start)


def _failed_values(failure):
    return {name: f'failed:{failure.stage}' for name in METRICS}


def run_point(config, data, index, point, baselines):
    """
    All repeats of one grid point, averaged
    :return: ReportRow
    """
    start = time.perf_counter()
    trial_dir = os.path.join(config.output_dir, 'trials', str(index))
    values = {name: None for name in METRICS}
    surrogate = config.surrogate_spec
    try:
        trials = [run_trial(config, data, point, repeat, baselines, trial_dir) for repeat in range(config.repeats)]
        surrogate = trials[0]['surrogate']
        for name in METRICS:
            samples = [trial[name] for trial in trials if trial[name] is not None]
            values[name] = float(np.mean(samples)) if samples else None
        logging.info(f'Grid point {index} {point}: CA {values["ca"]:.4f}, ASR {values["asr"]:.4f}')
    except TrialFailure as failure:
        logging.error(f'Grid point {index} {point} failed in stage {failure.stage}: {failure.cause}')
        values = _failed_values(failure)
    return _point_row(config, point, values, surrogate, start)


def run_experiment(config, threads=None):
    """
    Run every grid point of an experiment and write report.csv, baseline.csv and trials/
    Rows are written in grid order as soon as every earlier row is complete.
    When the datasets cannot be prepared every grid point gets a failed:data row.
    :param config: ExperimentConfig
    :param threads: concurrent grid points; defaults to SHADOWPRINT_THREADS or 1
    :return: list of ReportRow in grid order
    """
    if threads is None:
        threads = get_env_int(THREADS_ENV, 1, minimum=1)
    os.makedirs(config.output_dir, exist_ok=True)
    grid = config.grid()
    writer = ReportWriter(os.path.join(config.output_dir, REPORT_FILE))
    baseline_writer = ReportWriter(os.path.join(config.output_dir, BASELINE_FILE))

    start = time.perf_counter()
    try:
        with stage('data'):
            data = prepare_data(config)
    except TrialFailure as failure:
        logging.error(f'Data preparation failed, skipping all {len(grid)} grid points: {failure.cause}')
        rows = [_point_row(config, point, _failed_values(failure), config.surrogate_spec, start) for point in grid]
        writer.append(rows)
        return rows

    logging.info(f'Running {len(grid)} grid points x {config.repeats} repeats on {threads} thread(s)')
    baselines = BaselineCache()
    rows = []
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(run_point, config, data, index, point, baselines)
                   for index, point in enumerate(grid)]
        for future in futures:
            row = future.result()
            writer.append([row])
            rows.append(row)

    baseline_writer.append(baselines.rows())
    return rows
