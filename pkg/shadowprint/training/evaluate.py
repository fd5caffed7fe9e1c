# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import numpy as np

from shadowprint.attack.trigger import blend
from shadowprint.misc.errors import ContractError
from shadowprint.models.network import predict
from .trainer import accuracy


def evaluate_ca(params, spec, clean_test, batch_size=256):
    """
    Clean accuracy
    :return: fraction of argmax-correct predictions in [0, 1]
    :raises ContractError: empty test set
    """
    return accuracy(params, spec, clean_test, batch_size=batch_size)


def evaluate_asr(params, spec, clean_test, trigger, w, y_t, batch_size=256):
    """
    Attack success rate: blend the trigger into every test sample whose true label is not y_t and
    return the fraction predicted as y_t. Samples of class y_t are excluded entirely.
    :raises ContractError: no test sample outside class y_t
    :raises DimensionError: trigger shape differs from the image shape
    """
    keep = clean_test.labels != y_t
    if not np.any(keep):
        raise ContractError(f'{clean_test.name} holds no samples outside target class {y_t}')
    triggered = blend(clean_test.images[keep], trigger, w)
    return float(np.mean(predict(params, spec, triggered, batch_size=batch_size) == y_t))
