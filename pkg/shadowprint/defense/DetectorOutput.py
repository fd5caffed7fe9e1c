# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from dataclasses import dataclass

import numpy as np
import pandas as pd

from shadowprint.misc.errors import (
    ConfigError,
    ContractError
)

DEFAULT_FPR = 0.05


def _scores(values, what):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ContractError(f'{what} scores are empty')
    return values


def calibrate(clean_scores, calibration_fpr=DEFAULT_FPR):
    """
    Threshold at the (1 - fpr) quantile of clean scores, plus the weight given to scores equal to it.
    The weight makes the expected clean flag rate equal fpr even when scores are discrete.
    :param clean_scores: suspiciousness scores of clean calibration inputs
    :param calibration_fpr: target false-positive rate in (0, 1)
    :return: tuple of (threshold, tie_weight in [0, 1])
    :raises ContractError: no clean scores
    """
    if not 0.0 < calibration_fpr < 1.0:
        raise ConfigError(f'calibration_fpr must lie in (0, 1), got {calibration_fpr}')
    clean = _scores(clean_scores, 'Clean')
    threshold = float(np.quantile(clean, 1.0 - calibration_fpr))
    above = np.mean(clean > threshold)
    equal = np.mean(clean == threshold)
    tie_weight = float(np.clip((calibration_fpr - above) / equal, 0.0, 1.0)) if equal > 0 else 0.0
    return threshold, tie_weight


@dataclass(frozen=True, eq=False)
class DetectorOutput:
    """
    Per-input suspiciousness scores (higher = more suspicious) with a clean-calibrated threshold
    """
    scores: np.ndarray
    threshold: float
    calibration_fpr: float
    tie_weight: float = 0.0

    @classmethod
    def calibrated(cls, scores, clean_scores, calibration_fpr=DEFAULT_FPR):
        threshold, tie_weight = calibrate(clean_scores, calibration_fpr)
        return cls(np.asarray(scores, dtype=np.float64).reshape(-1), threshold, calibration_fpr, tie_weight)

    def flag_rate(self):
        """
        Expected fraction of flagged inputs; scores at the threshold count with tie_weight
        """
        scores = _scores(self.scores, 'Detector')
        return float(np.mean(scores > self.threshold) + self.tie_weight * np.mean(scores == self.threshold))

    def flags(self, seed=0):
        """
        Per-input decision; inputs scoring exactly the threshold are flagged with probability tie_weight
        """
        draws = np.random.default_rng(seed).random(len(self.scores))
        return (self.scores > self.threshold) | ((self.scores == self.threshold) & (draws < self.tie_weight))


def compute_ddr(clean_scores, poisoned_scores, calibration_fpr=DEFAULT_FPR):
    """
    Defense detection rate: fraction of poisoned inputs flagged at the clean-calibrated threshold
    :param clean_scores: scores of clean calibration inputs
    :param poisoned_scores: scores of poisoned inputs
    :param calibration_fpr: clean false-positive rate defining the threshold
    :return: float in [0, 1]
    :raises ContractError: either score set is empty
    """
    poisoned = _scores(poisoned_scores, 'Poisoned')
    return DetectorOutput.calibrated(poisoned, clean_scores, calibration_fpr).flag_rate()


def write_detector_csv(filename, output, seed=0, input_ids=None):
    """
    Write input_id, score, flagged rows for a detector output
    """
    ids = np.arange(len(output.scores)) if input_ids is None else np.asarray(input_ids)
    frame = pd.DataFrame({
        'input_id': ids,
        'score': output.scores,
        'flagged': output.flags(seed).astype(int),
    })
    frame.to_csv(filename, index=False, float_format='%.6f')
    return frame
