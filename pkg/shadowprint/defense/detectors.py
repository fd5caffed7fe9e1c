# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
import logging
from collections import namedtuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_samples

from shadowprint.misc.errors import (
    CalibrationError,
    ConfigError,
    ContractError,
    DimensionError
)
from shadowprint.models.network import (
    embed,
    predict
)

DEFAULT_SCALES = (3, 5, 7, 9, 11)
GRAM_ORDERS = (1, 2)
MIN_REFERENCE_PER_CLASS = 10
MIN_CLUSTER_CLASS_SIZE = 4

TwoMeansSplit = namedtuple('TwoMeansSplit', ['assignment', 'silhouette', 'sample_silhouettes', 'minority'])
ClusterAnalysis = namedtuple('ClusterAnalysis', ['flags', 'silhouettes', 'scores'])


def _images(inputs):
    return np.asarray(getattr(inputs, 'images', inputs))


def scale_consistency_detector(params, spec, inputs, scale_set=DEFAULT_SCALES, batch_size=256):
    """
    Prediction stability under pixel amplification: score = fraction of scaled copies
    (x * s clipped to [0, 1]) predicted as the unscaled input
    :param inputs: Dataset or numpy array [N x C x H x W]
    :param scale_set: positive scales
    :return: numpy array of scores in [0, 1]
    :raises ConfigError: empty scale set or non-positive scale
    """
    scales = tuple(scale_set)
    if len(scales) == 0:
        raise ConfigError('scale_consistency_detector needs at least one scale')
    if any(s <= 0 for s in scales):
        raise ConfigError(f'Scales must be positive, got {list(scales)}')

    images = _images(inputs)
    base = predict(params, spec, images, batch_size=batch_size)
    agree = np.zeros(len(images))
    for factor in scales:
        scaled = np.clip(images * images.dtype.type(factor), 0.0, 1.0)
        agree += predict(params, spec, scaled, batch_size=batch_size) == base
    return agree / len(scales)


def gram_features(embeddings, orders=GRAM_ORDERS):
    """
    Normalised Gram features: for each order p, the upper triangle of (e^p)(e^p)^T mapped back by the
    signed p-th root, concatenated over orders
    :param embeddings: numpy array [N x E]
    :return: numpy array [N x len(orders) * E(E+1)/2]
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise DimensionError(f'gram_features expects [N x E] embeddings, got shape {embeddings.shape}')
    rows, cols = np.triu_indices(embeddings.shape[1])
    parts = []
    for order in orders:
        powered = embeddings ** order
        gram = powered[:, rows] * powered[:, cols]
        parts.append(np.sign(gram) * np.abs(gram) ** (1.0 / order))
    return np.concatenate(parts, axis=1)


class GramStatistics:
    """
    Per-class centre and deviation of Gram features on clean reference data
    """

    def __init__(self, means, stds, epsilon=1e-6):
        self.means = means
        self.stds = stds
        self.epsilon = epsilon

    @staticmethod
    def _check_counts(labels, num_classes, min_per_class):
        counts = np.bincount(labels, minlength=num_classes)
        short = np.flatnonzero(counts < min_per_class)
        if short.size > 0:
            raise CalibrationError(f'Class {int(short[0])} has {int(counts[short[0]])} reference samples; '
                                   f'at least {min_per_class} are needed')

    @classmethod
    def fit(cls, features, labels, num_classes, min_per_class=MIN_REFERENCE_PER_CLASS):
        """
        Statistics of precomputed feature rows: per-class mean and standard deviation
        :raises CalibrationError: a class has fewer than min_per_class reference samples
        """
        labels = np.asarray(labels)
        cls._check_counts(labels, num_classes, min_per_class)
        means = np.stack([features[labels == c].mean(axis=0) for c in range(num_classes)])
        stds = np.stack([features[labels == c].std(axis=0) for c in range(num_classes)])
        return cls(means, stds)

    @classmethod
    def from_embeddings(cls, embeddings, labels, num_classes, orders=GRAM_ORDERS,
                        min_per_class=MIN_REFERENCE_PER_CLASS):
        """
        Statistics centred on the Gram features of each class's mean embedding, with the root mean
        square deviation of the reference features around that centre.
        An embedding equal to its class mean scores 0.
        :param embeddings: numpy array [N x E] of clean reference embeddings
        :raises CalibrationError: a class has fewer than min_per_class reference samples
        """
        embeddings = np.asarray(embeddings, dtype=np.float64)
        labels = np.asarray(labels)
        cls._check_counts(labels, num_classes, min_per_class)
        features = gram_features(embeddings, orders)
        means = []
        stds = []
        for c in range(num_classes):
            centre = gram_features(embeddings[labels == c].mean(axis=0, keepdims=True), orders)[0]
            means.append(centre)
            stds.append(np.sqrt(np.mean((features[labels == c] - centre) ** 2, axis=0)))
        return cls(np.stack(means), np.stack(stds))

    def score(self, features, classes):
        """
        Maximum standardised deviation of each feature row from the statistics of its class
        """
        classes = np.asarray(classes)
        deviation = np.abs(features - self.means[classes]) / (self.stds[classes] + self.epsilon)
        return deviation.max(axis=1)


def gram_anomaly_detector(params, spec, clean_reference, inputs, orders=GRAM_ORDERS, batch_size=256):
    """
    Gram-feature anomaly of each input against the clean statistics of its predicted class
    :param clean_reference: Dataset with at least 10 samples of every class
    :param inputs: Dataset or numpy array [N x C x H x W]
    :return: numpy array of scores
    :raises CalibrationError: a class is under-represented in clean_reference
    """
    reference = embed(params, spec, clean_reference.images, batch_size=batch_size)
    stats = GramStatistics.from_embeddings(reference, clean_reference.labels, spec.num_classes, orders)
    images = _images(inputs)
    features = gram_features(embed(params, spec, images, batch_size=batch_size), orders)
    return stats.score(features, predict(params, spec, images, batch_size=batch_size))


def _content_seed(rows, seed):
    digest = hashlib.sha256(np.ascontiguousarray(rows, dtype='<f8').tobytes()).digest()
    return (int.from_bytes(digest[:4], 'little') + int(seed)) % (2 ** 32)


def two_means_split(embeddings, seed=0):
    """
    2-means clustering (10 restarts) independent of the row order: rows are sorted before clustering
    and the restarts are seeded from the sorted content
    :param embeddings: numpy array [N x E], N >= 2
    :return: TwoMeansSplit(assignment, silhouette, sample_silhouettes, minority cluster id)
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or len(embeddings) < 3:
        raise ContractError(f'two_means_split needs at least 3 embedding rows, got shape {embeddings.shape}')
    order = np.lexsort(embeddings.T[::-1])
    ordered = embeddings[order]
    if len(np.unique(ordered, axis=0)) < 2:
        zeros = np.zeros(len(embeddings))
        return TwoMeansSplit(zeros.astype(int), 0.0, zeros, 1)

    clusterer = KMeans(n_clusters=2, n_init=10, random_state=_content_seed(ordered, seed))
    assignment = np.empty(len(embeddings), dtype=int)
    assignment[order] = clusterer.fit_predict(ordered)
    sample_silhouettes = silhouette_samples(embeddings, assignment)
    sizes = np.bincount(assignment, minlength=2)
    minority = int(np.argmin(sizes))
    return TwoMeansSplit(assignment, float(sample_silhouettes.mean()), sample_silhouettes, minority)


def analyze_clusters(embeddings, labels, num_classes, seed=0, threshold=0.5, max_minority=0.35):
    """
    Per-class 2-means analysis of embeddings
    :return: ClusterAnalysis(flags: dict class -> bool, silhouettes: dict class -> float,
             scores: per-sample silhouette, positive in the class minority cluster and negated otherwise)
    """
    labels = np.asarray(labels)
    scores = np.zeros(len(labels))
    flags, silhouettes = {}, {}
    for label in range(num_classes):
        members = np.flatnonzero(labels == label)
        if len(members) < MIN_CLUSTER_CLASS_SIZE:
            logging.warning(f'Skipping class {label}: {len(members)} samples, '
                            f'at least {MIN_CLUSTER_CLASS_SIZE} needed for clustering')
            flags[label], silhouettes[label] = False, 0.0
            continue
        result = two_means_split(embeddings[members], seed=seed)
        in_minority = result.assignment == result.minority
        minority_fraction = np.mean(in_minority)
        silhouettes[label] = result.silhouette
        flags[label] = bool(result.silhouette > threshold and minority_fraction < max_minority)
        scores[members] = np.where(in_minority, result.sample_silhouettes, -result.sample_silhouettes)
    return ClusterAnalysis(flags, silhouettes, scores)


def activation_cluster_detector(params, spec, train_subset, seed=0, threshold=0.5, max_minority=0.35,
                                batch_size=256):
    """
    Activation clustering over the embeddings of a (possibly poisoned) training subset, grouped by label.
    A class is flagged when its 2-means split has silhouette above threshold and a minority cluster
    holding less than max_minority of the class.
    :return: ClusterAnalysis
    """
    embeddings = embed(params, spec, train_subset.images, batch_size=batch_size)
    return analyze_clusters(embeddings, train_subset.labels, spec.num_classes, seed=seed,
                            threshold=threshold, max_minority=max_minority)
