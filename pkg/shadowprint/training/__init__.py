# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .TrainConfig import (
    OptimizerKind,
    TrainConfig,
    TrainReport
)
from .trainer import (
    train,
    accuracy
)
from .evaluate import (
    evaluate_ca,
    evaluate_asr
)

# if somebody does "from shadowprint.training import *", this is what they will
# be able to access:
__all__ = [
    'OptimizerKind',
    'TrainConfig',
    'TrainReport',
    'train',
    'accuracy',
    'evaluate_ca',
    'evaluate_asr',
]
