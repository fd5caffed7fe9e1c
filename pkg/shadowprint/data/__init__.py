# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .Dataset import (
    Dataset,
    SubsetSpec
)
from .loaders import (
    rounded_count,
    read_cifar10_batch,
    load_cifar10,
    synth_blobs,
    sample_subset,
    split_indices,
    split,
    assert_disjoint,
    dataset_manifest,
    write_manifest,
    save_dataset,
    load_dataset
)

# if somebody does "from shadowprint.data import *", this is what they will
# be able to access:
__all__ = [
    'Dataset',
    'SubsetSpec',
    'rounded_count',
    'read_cifar10_batch',
    'load_cifar10',
    'synth_blobs',
    'sample_subset',
    'split_indices',
    'split',
    'assert_disjoint',
    'dataset_manifest',
    'write_manifest',
    'save_dataset',
    'load_dataset',
]
