# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from shadowprint.misc.errors import (
    ConfigError,
    DataError
)


def _readonly(array):
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Ordered collection of labeled images with pixels in [0, 1]
    images: float32 array [N x C x H x W]; labels: int64 array [N]
    """
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str

    def __post_init__(self):
        images = _readonly(np.array(self.images, dtype=np.float32, copy=True))
        labels = _readonly(np.array(self.labels, dtype=np.int64, copy=True).reshape(-1))
        if images.ndim != 4:
            raise DataError(f'{self.name}: images must be [N x C x H x W], got shape {images.shape}')
        if len(images) != len(labels):
            raise DataError(f'{self.name}: {len(images)} images but {len(labels)} labels')
        if self.num_classes < 1:
            raise DataError(f'{self.name}: num_classes must be positive, got {self.num_classes}')
        if len(labels) > 0 and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError(f'{self.name}: labels must lie in [0, {self.num_classes})')
        if images.size > 0 and (not np.all(np.isfinite(images)) or images.min() < 0.0 or images.max() > 1.0):
            raise DataError(f'{self.name}: pixel values must lie in [0, 1]')
        object.__setattr__(self, 'images', images)
        object.__setattr__(self, 'labels', labels)

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices, name=None):
        """
        Dataset restricted to the given indices, in the given order
        """
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes,
                       self.name if name is None else name)

    def replace(self, images=None, labels=None, name=None):
        return Dataset(self.images if images is None else images,
                       self.labels if labels is None else labels,
                       self.num_classes,
                       self.name if name is None else name)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def image_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.images, dtype='<f4').tobytes()).hexdigest()

    def label_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.labels, dtype='<i8').tobytes()).hexdigest()

    def content_hash(self):
        """
        SHA-256 identifying the images, labels and class count
        """
        digest = hashlib.sha256()
        digest.update(self.image_hash().encode('ascii'))
        digest.update(self.label_hash().encode('ascii'))
        digest.update(str(self.num_classes).encode('ascii'))
        return digest.hexdigest()


@dataclass(frozen=True)
class SubsetSpec:
    """
    Seeded uniform sample of a dataset, optionally restricted to one class
    """
    source: str
    fraction: float
    seed: int = 0
    class_filter: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f'Subset fraction must lie in (0, 1], got {self.fraction}')
