# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .AttackConfig import (
    AttackMode,
    Scenario,
    AttackConfig,
    Trigger,
    PoisonManifest
)
from .trigger import (
    blend,
    blend_tensor,
    cluster_loss,
    mean_pairwise_cosine,
    embed_triggered,
    optimize_trigger,
    trigger_hash,
    save_trigger,
    load_trigger
)
from .poison import (
    select_poison_indices,
    poison_dataset,
    write_ppm,
    dump_image_pairs
)
# surrogate imports shadowprint.training, whose evaluation imports .trigger; keep it last
from .surrogate import (
    resolve_surrogate_spec,
    train_surrogate
)

# if somebody does "from shadowprint.attack import *", this is what they will
# be able to access:
__all__ = [
    'AttackMode',
    'Scenario',
    'AttackConfig',
    'Trigger',
    'PoisonManifest',
    'blend',
    'blend_tensor',
    'cluster_loss',
    'mean_pairwise_cosine',
    'embed_triggered',
    'optimize_trigger',
    'trigger_hash',
    'save_trigger',
    'load_trigger',
    'select_poison_indices',
    'poison_dataset',
    'write_ppm',
    'dump_image_pairs',
    'resolve_surrogate_spec',
    'train_surrogate',
]
