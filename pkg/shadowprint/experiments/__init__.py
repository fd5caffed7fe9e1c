# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .ExperimentConfig import (
    ExperimentConfig,
    DATASETS,
    DETECTORS
)
from .runner import (
    REPORT_COLUMNS,
    DataBundle,
    ReportRow,
    ReportWriter,
    TrialFailure,
    BaselineCache,
    derive_seed,
    prepare_data,
    attacker_subset,
    craft_trigger,
    baseline_run,
    defense_metrics,
    run_trial,
    run_point,
    run_experiment
)
from .cli import main

# if somebody does "from shadowprint.experiments import *", this is what they will
# be able to access:
__all__ = [
    'ExperimentConfig',
    'DATASETS',
    'DETECTORS',
    'REPORT_COLUMNS',
    'DataBundle',
    'ReportRow',
    'ReportWriter',
    'TrialFailure',
    'BaselineCache',
    'derive_seed',
    'prepare_data',
    'attacker_subset',
    'craft_trigger',
    'baseline_run',
    'defense_metrics',
    'run_trial',
    'run_point',
    'run_experiment',
    'main',
]
