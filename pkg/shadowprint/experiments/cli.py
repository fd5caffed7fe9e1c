# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import argparse
import json
import logging
import os
import sys

from shadowprint.attack import (
    blend,
    dump_image_pairs,
    load_trigger,
    poison_dataset,
    save_trigger
)
from shadowprint.data import (
    load_dataset,
    save_dataset,
    split,
    write_manifest,
    dataset_manifest
)
from shadowprint.defense import (
    DetectorOutput,
    activation_cluster_detector,
    gram_anomaly_detector,
    scale_consistency_detector,
    write_detector_csv
)
from shadowprint.misc.errors import ConfigError
from shadowprint.models import (
    load_checkpoint,
    save_checkpoint
)
from shadowprint.training import (
    evaluate_asr,
    evaluate_ca,
    train
)
from shadowprint.version import __version__
from .ExperimentConfig import ExperimentConfig
from .runner import (
    TrialFailure,
    craft_trigger,
    derive_seed,
    poison_seed,
    prepare_data,
    run_experiment,
    victim_spec_for,
    victim_train_config
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    """ Command line could not be parsed """


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f'{self.prog}: error: {message}')


def _parse_set(items):
    overrides = {}
    for item in items or []:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f'Invalid --set entry "{item}"; expected key=value')
        overrides[key.strip().lower()] = value.strip()
    return overrides


def load_experiment_config(args):
    """
    Configuration file plus --set, --seed, --repeats and --out overrides
    :return: ExperimentConfig
    """
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides['master_seed'] = str(args.seed)
    if args.repeats is not None:
        overrides['repeats'] = str(args.repeats)
    if args.out is not None:
        overrides['output_dir'] = args.out
    return ExperimentConfig(cfg_filename=args.config, overrides=overrides)


def _first_point(config):
    return config.grid()[0]


def _write_json(filename, content):
    with open(filename, 'w', encoding='utf-8') as fh:
        json.dump(content, fh, indent=2, sort_keys=True)


def _trigger(args, config, data, point):
    if getattr(args, 'trigger', None):
        return config.attack_config(point[0], point[1], seed=0), load_trigger(args.trigger)
    attack_config, trigger, _ = craft_trigger(config, data, point)
    return attack_config, trigger


def cmd_optimize_trigger(args, config):
    data = prepare_data(config)
    attack_config, trigger, surrogate_spec = craft_trigger(config, data, _first_point(config))
    save_trigger(os.path.join(config.output_dir, 'trigger.sptrig'), trigger)
    _write_json(os.path.join(config.output_dir, 'trigger_trace.json'),
                {'loss_trace': list(trigger.loss_trace), 'surrogate': surrogate_spec.name,
                 'attack': attack_config.to_dict()})


def cmd_poison(args, config):
    data = prepare_data(config)
    point = _first_point(config)
    attack_config, trigger = _trigger(args, config, data, point)
    poisoned, manifest = poison_dataset(data.train, trigger, attack_config, poison_seed(config, point))
    save_dataset(os.path.join(config.output_dir, 'poisoned.npz'), poisoned)
    manifest.save(os.path.join(config.output_dir, 'poison_manifest.json'))
    write_manifest(os.path.join(config.output_dir, 'dataset_manifest.json'),
                   dataset_manifest(poisoned, seed=config.master_seed, sources=[data.train.name]))


def cmd_train(args, config):
    data = prepare_data(config)
    dataset = load_dataset(args.data) if args.data else data.train
    spec = victim_spec_for(config, dataset)
    params, report = train(spec, dataset, victim_train_config(config), clean_test=data.test)
    save_checkpoint(os.path.join(config.output_dir, 'model.spmodel'), params, spec)
    report.save(os.path.join(config.output_dir, 'train_report.json'))


def cmd_eval(args, config):
    data = prepare_data(config)
    spec = victim_spec_for(config, data.train)
    params = load_checkpoint(args.model, spec)
    results = {'ca': evaluate_ca(params, spec, data.test)}
    if args.trigger:
        point = _first_point(config)
        attack_config = config.attack_config(point[0], point[1], seed=0)
        results['asr'] = evaluate_asr(params, spec, data.test, load_trigger(args.trigger), point[1],
                                      attack_config.target_label)
    _write_json(os.path.join(config.output_dir, 'eval.json'), results)
    print(json.dumps(results, sort_keys=True))


def cmd_defend(args, config):
    data = prepare_data(config)
    spec = victim_spec_for(config, data.train)
    params = load_checkpoint(args.model, spec)
    point = _first_point(config)
    attack_config = config.attack_config(point[0], point[1], seed=0)
    seed = derive_seed(config.master_seed, tuple(point) + (0,), 'defense')
    reference, held = split(data.test, 0.5, seed)
    triggered = blend(held.images[held.labels != attack_config.target_label], load_trigger(args.trigger), point[1])
    fpr = config.calibration_fpr

    ddr = {}
    for name in config.defenses:
        if name == 'scale':
            clean = scale_consistency_detector(params, spec, held, config.scales)
            suspect = scale_consistency_detector(params, spec, triggered, config.scales)
        elif name == 'gram':
            clean = gram_anomaly_detector(params, spec, reference, held)
            suspect = gram_anomaly_detector(params, spec, reference, triggered)
        else:
            if not args.data:
                logging.warning('Skipping the cluster detector: it needs --data and --manifest')
                continue
            poisoned = load_dataset(args.data)
            with open(args.manifest, 'r', encoding='utf-8') as fh:
                indices = set(json.load(fh)['poisoned_indices'])
            scores = activation_cluster_detector(params, spec, poisoned, seed=seed).scores
            clean = [s for idx, s in enumerate(scores) if idx not in indices]
            suspect = [s for idx, s in enumerate(scores) if idx in indices]
        output = DetectorOutput.calibrated(suspect, clean, fpr)
        write_detector_csv(os.path.join(config.output_dir, f'detector_{name}.csv'), output, seed=seed)
        ddr[name] = output.flag_rate()
    _write_json(os.path.join(config.output_dir, 'ddr.json'), ddr)
    print(json.dumps(ddr, sort_keys=True))


def cmd_experiment(args, config):
    rows = run_experiment(config)
    failed = sum(1 for row in rows if row.failed)
    logging.info(f'Wrote {len(rows)} rows ({failed} failed) to {config.output_dir}')


def cmd_dump_images(args, config):
    data = prepare_data(config)
    point = _first_point(config)
    attack_config, trigger = _trigger(args, config, data, point)
    poisoned, manifest = poison_dataset(data.train, trigger, attack_config, poison_seed(config, point))
    paths = dump_image_pairs(data.train, poisoned, manifest, os.path.join(config.output_dir, 'images'), args.k)
    logging.info(f'Wrote {len(paths)} images')


COMMANDS = {
    'optimize-trigger': cmd_optimize_trigger,
    'poison': cmd_poison,
    'train': cmd_train,
    'eval': cmd_eval,
    'defend': cmd_defend,
    'experiment': cmd_experiment,
    'dump-images': cmd_dump_images,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat key = value or YAML configuration file')
    common.add_argument('--seed', type=int, help='master seed override')
    common.add_argument('--out', help='output directory override')
    common.add_argument('--repeats', type=int, help='independent trials averaged per grid point')
    common.add_argument('--set', action='append', metavar='KEY=VALUE', help='configuration override')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')

    parser = _ArgumentParser(prog='shadowprint', description='Clustering-based backdoor attack laboratory')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', parser_class=_ArgumentParser)
    subparsers.required = True

    subparsers.add_parser('optimize-trigger', parents=[common], help='train a surrogate and optimise a trigger')
    poison = subparsers.add_parser('poison', parents=[common], help='poison the victim training set')
    poison.add_argument('--trigger', help='trigger file; optimised from the configuration when omitted')
    train_cmd = subparsers.add_parser('train', parents=[common], help='train a victim model')
    train_cmd.add_argument('--data', help='dataset archive written by poison; clean data when omitted')
    evaluate = subparsers.add_parser('eval', parents=[common], help='clean accuracy and attack success rate')
    evaluate.add_argument('--model', required=True, help='model checkpoint')
    evaluate.add_argument('--trigger', help='trigger file')
    defend = subparsers.add_parser('defend', parents=[common], help='run the detectors and report DDR')
    defend.add_argument('--model', required=True, help='model checkpoint')
    defend.add_argument('--trigger', required=True, help='trigger file')
    defend.add_argument('--data', help='poisoned dataset archive for the cluster detector')
    defend.add_argument('--manifest', help='poison manifest matching --data')
    subparsers.add_parser('experiment', parents=[common], help='run the configured grid')
    dump = subparsers.add_parser('dump-images', parents=[common], help='write clean/poisoned PPM pairs')
    dump.add_argument('--trigger', help='trigger file; optimised from the configuration when omitted')
    dump.add_argument('--k', type=int, default=4, help='number of pairs')
    return parser


def main(argv=None):
    """
    Command line entry point
    :param argv: arguments, defaults to sys.argv[1:]
    :return: exit code: 0 success, 1 usage or validation error, 2 runtime failure
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:
        # --help and --version
        return EXIT_OK if exc.code is None else exc.code

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(message)s')

    try:
        config = load_experiment_config(args)
        if args.command == 'defend' and args.data and not args.manifest:
            raise ConfigError('defend --data needs --manifest')
        if args.command == 'dump-images' and args.k < 1:
            raise ConfigError(f'--k must be positive, got {args.k}')
        os.makedirs(config.output_dir, exist_ok=True)
        COMMANDS[args.command](args, config)
    except TrialFailure as failure:
        logging.error(failure)
        return EXIT_VALIDATION if isinstance(failure.cause, ValueError) else EXIT_FAILURE
    except ValueError as err:
        logging.error(err)
        return EXIT_VALIDATION
    except Exception as err:
        logging.error(f'{args.command} failed: {err}')
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
