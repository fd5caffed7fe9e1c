# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from .DetectorOutput import (
    DEFAULT_FPR,
    DetectorOutput,
    calibrate,
    compute_ddr,
    write_detector_csv
)
from .detectors import (
    DEFAULT_SCALES,
    TwoMeansSplit,
    ClusterAnalysis,
    scale_consistency_detector,
    gram_features,
    GramStatistics,
    gram_anomaly_detector,
    two_means_split,
    analyze_clusters,
    activation_cluster_detector
)

# if somebody does "from shadowprint.defense import *", this is what they will
# be able to access:
__all__ = [
    'DEFAULT_FPR',
    'DetectorOutput',
    'calibrate',
    'compute_ddr',
    'write_detector_csv',
    'DEFAULT_SCALES',
    'TwoMeansSplit',
    'ClusterAnalysis',
    'scale_consistency_detector',
    'gram_features',
    'GramStatistics',
    'gram_anomaly_detector',
    'two_means_split',
    'analyze_clusters',
    'activation_cluster_detector',
]
