# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .Tensor import (
    Tensor,
    Tape,
    backward,
    get_default_dtype,
    set_default_dtype,
    precision
)
from .Adam import (
    AdamState,
    adam_step,
    sgd_momentum_step,
    Adam,
    SGDMomentum
)
from . import functional

# if somebody does "from shadowprint.tensor import *", this is what they will
# be able to access:
__all__ = [
    'Tensor',
    'Tape',
    'backward',
    'get_default_dtype',
    'set_default_dtype',
    'precision',
    'AdamState',
    'adam_step',
    'sgd_momentum_step',
    'Adam',
    'SGDMomentum',
    'functional',
]
