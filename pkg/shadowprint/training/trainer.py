# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import logging
import time

import numpy as np

from shadowprint.misc.errors import (
    ContractError,
    DataError,
    DimensionError
)
from shadowprint.models.network import (
    build_model,
    forward,
    predict,
    validate_params
)
from shadowprint.tensor import (
    Adam,
    SGDMomentum,
    Tape,
    Tensor,
    backward,
    functional as F
)
from .TrainConfig import (
    OptimizerKind,
    TrainConfig,
    TrainReport
)


def _make_optimizer(params, config):
    if config.optimizer == OptimizerKind.SGD_MOMENTUM:
        return SGDMomentum(params, lr=config.lr, momentum=config.momentum)
    return Adam(params, lr=config.lr)


def _check_dataset(spec, dataset, what):
    if len(dataset) == 0:
        raise ContractError(f'{what} dataset {dataset.name} is empty')
    if dataset.image_shape != spec.input_shape:
        raise DimensionError(f'{dataset.name} images {dataset.image_shape} do not fit {spec.name} '
                             f'input {spec.input_shape}')
    if dataset.labels.max() >= spec.num_classes:
        raise DataError(f'{dataset.name} holds label {int(dataset.labels.max())}, but {spec.name} has '
                        f'{spec.num_classes} classes')


def accuracy(params, spec, dataset, batch_size=256):
    """
    Fraction of argmax-correct predictions, ties resolved to the lowest class index
    :raises ContractError: empty dataset
    """
    if len(dataset) == 0:
        raise ContractError(f'Cannot measure accuracy on the empty dataset {dataset.name}')
    return float(np.mean(predict(params, spec, dataset.images, batch_size=batch_size) == dataset.labels))


def train(spec, dataset, config=None, clean_test=None, init_params=None):
    """
    Mini-batch training with softmax cross-entropy, deterministic for a fixed config seed
    :param spec: ModelSpec
    :param dataset: training Dataset
    :param config: TrainConfig; defaults to TrainConfig()
    :param clean_test: optional Dataset evaluated after every epoch
    :param init_params: optional starting ModelParams; otherwise build_model(spec, config.seed)
    :return: tuple of (ModelParams, TrainReport)
    :raises DataError: label outside the spec's classes
    """
    config = TrainConfig() if config is None else config
    _check_dataset(spec, dataset, 'Training')
    if clean_test is not None:
        _check_dataset(spec, clean_test, 'Test')

    start_time = time.perf_counter()
    if init_params is None:
        init_params = build_model(spec, config.seed)
    validate_params(init_params, spec)
    params = init_params.trainable_copy()
    optimizer = _make_optimizer(params.tensors, config)
    rng = np.random.default_rng(config.seed)

    losses, accuracies = [], []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset)) if config.shuffle else np.arange(len(dataset))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            with Tape():
                logits, _ = forward(params, spec, Tensor(dataset.images[batch], dtype=params.tensors[0].dtype))
                loss = F.softmax_cross_entropy(logits, dataset.labels[batch])
            backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            total += loss.item() * len(batch)

        losses.append(total / len(dataset))
        accuracies.append(None if clean_test is None else accuracy(params, spec, clean_test))
        logging.info(f'{spec.name} epoch {epoch + 1}/{config.epochs}: loss {losses[-1]:.4f}'
                     + ('' if accuracies[-1] is None else f', clean accuracy {accuracies[-1]:.4f}'))

    trained = params.frozen()
    report = TrainReport(losses, accuracies, trained.checksum(), time.perf_counter() - start_time)
    return trained, report
