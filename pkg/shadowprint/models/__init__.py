# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .ModelSpec import (
    EmbeddingTap,
    LayerSpec,
    ModelSpec,
    predefined_specs,
    get_spec,
    SPEC_NAMES
)
from .network import (
    ModelParams,
    build_model,
    forward,
    predict,
    predict_logits,
    embed,
    validate_params,
    save_checkpoint,
    load_checkpoint
)

# if somebody does "from shadowprint.models import *", this is what they will
# be able to access:
__all__ = [
    'EmbeddingTap',
    'LayerSpec',
    'ModelSpec',
    'predefined_specs',
    'get_spec',
    'SPEC_NAMES',
    'ModelParams',
    'build_model',
    'forward',
    'predict',
    'predict_logits',
    'embed',
    'validate_params',
    'save_checkpoint',
    'load_checkpoint',
]
