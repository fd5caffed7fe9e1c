# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
import logging

import numpy as np

from shadowprint.misc.binary_io import (
    ByteReader,
    read_file
)
from shadowprint.misc.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    NumericError
)
from shadowprint.models.network import (
    embed,
    forward
)
from shadowprint.tensor import (
    Adam,
    Tape,
    Tensor,
    backward,
    get_default_dtype,
    functional as F
)
from .AttackConfig import Trigger

TRIGGER_MAGIC = b'SPTRIG1\0'


def _pattern_of(trigger):
    return trigger.pattern if isinstance(trigger, Trigger) else np.asarray(trigger)


def _check_weight(w):
    if not 0.0 < w <= 1.0:
        raise ConfigError(f'Trigger weight must lie in (0, 1], got {w}')


def blend(images, trigger, w):
    """
    Blend a trigger into an image or a batch of images: x * (1 - w) + t * w, clipped to [0, 1]
    :param images: numpy array [C x H x W] or [N x C x H x W]
    :param trigger: Trigger or numpy array [C x H x W]
    :param w: trigger weight in (0, 1]
    :return: numpy array with the dtype and shape of images
    :raises DimensionError: trigger shape differs from the image shape
    """
    _check_weight(w)
    images = np.asarray(images)
    pattern = _pattern_of(trigger)
    if images.ndim not in (3, 4) or images.shape[-3:] != pattern.shape:
        raise DimensionError(f'blend: trigger of shape {pattern.shape} does not fit images of shape {images.shape}')
    dtype = images.dtype if np.issubdtype(images.dtype, np.floating) else np.dtype(np.float32)
    weight = dtype.type(w)
    mixed = images.astype(dtype, copy=False) * (1 - weight) + pattern.astype(dtype, copy=False) * weight
    return np.clip(mixed, 0.0, 1.0).astype(dtype, copy=False)


def blend_tensor(batch, pattern, w):
    """
    Differentiable blend of a trigger tensor into a constant batch tensor
    :param batch: Tensor [B x C x H x W]
    :param pattern: Tensor [C x H x W]
    :return: Tensor [B x C x H x W]
    """
    _check_weight(w)
    if batch.ndim != 4 or batch.shape[1:] != pattern.shape:
        raise DimensionError(f'blend: trigger of shape {pattern.shape} does not fit batch of shape {batch.shape}')
    mixed = F.add(F.scale(batch, 1.0 - w), F.scale(F.expand_batch(pattern, batch.shape[0]), w))
    return F.clip(mixed, 0.0, 1.0)


def cluster_loss(embeddings):
    """
    Negated mean pairwise cosine similarity, -(1/N^2) * sum over ordered pairs i != j of cos(Z_i, Z_j)
    :param embeddings: Tensor [N x E], N >= 2
    :return: scalar Tensor in [-(1 - 1/N), 1 - 1/N]
    :raises ContractError: fewer than two rows
    :raises NumericError: a row has zero norm
    """
    if embeddings.ndim != 2:
        raise DimensionError(f'cluster_loss expects [N x E] embeddings, got shape {embeddings.shape}')
    count = embeddings.shape[0]
    if count < 2:
        raise ContractError(f'cluster_loss needs at least 2 embeddings, got {count}')

    unit = F.l2_normalize_rows(embeddings)
    cosines = F.matmul(unit, F.transpose(unit))
    off_diagonal = Tensor(1.0 - np.eye(count), dtype=embeddings.dtype)
    return F.scale(F.sum(F.mul(cosines, off_diagonal)), -1.0 / (count * count))


def mean_pairwise_cosine(embeddings):
    """
    Mean cosine similarity over ordered pairs of distinct rows
    :param embeddings: numpy array [N x E], N >= 2
    :return: float
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    count = len(embeddings)
    if count < 2:
        raise ContractError(f'mean_pairwise_cosine needs at least 2 embeddings, got {count}')
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms == 0):
        raise NumericError(f'mean_pairwise_cosine: row {int(np.flatnonzero(norms == 0)[0])} has zero norm')
    unit = embeddings / norms[:, None]
    cosines = unit @ unit.T
    return float((cosines.sum() - np.trace(cosines)) / (count * (count - 1)))


def embed_triggered(params, spec, images, trigger, w, batch_size=256):
    """
    Embeddings of triggered images at the spec's tap
    """
    return embed(params, spec, blend(images, trigger, w), batch_size=batch_size)


def _batch_loss(frozen, spec, images, pattern, w, target_label=0, target_weight=0.0):
    logits, embeddings = forward(frozen, spec, blend_tensor(Tensor(images, dtype=pattern.dtype), pattern, w))
    loss = cluster_loss(embeddings)
    if target_weight > 0:
        targets = np.full(len(images), target_label)
        loss = F.add(loss, F.scale(F.softmax_cross_entropy(logits, targets), target_weight))
    return loss


def optimize_trigger(surrogate, spec, attacker_data, config):
    """
    Optimise a universal trigger so the surrogate embeds triggered images close together.
    Each epoch visits the attacker data in seeded random order; every batch gets one Adam step on the
    gradient of cluster_loss with respect to the trigger. With a positive config.target_term_weight the
    surrogate's cross-entropy towards target_label is added, scaled by that weight.
    The surrogate parameters are never modified.
    :param surrogate: ModelParams of the surrogate
    :param spec: ModelSpec of the surrogate; the embedding tap of config applies
    :param attacker_data: Dataset
    :param config: AttackConfig (steps, batch_size, lr, trigger_weight, init_std, seed)
    :return: Trigger with loss_trace = (initial loss, loss after each epoch) on the first batch_size samples
    :raises NumericError: non-finite loss
    :raises ConfigError: target term requested for a target label the surrogate does not have
    """
    if len(attacker_data) == 0:
        raise ContractError('optimize_trigger needs attacker data')
    spec = spec.with_tap(config.embedding_tap)
    if attacker_data.image_shape != spec.input_shape:
        raise DimensionError(f'Attacker images {attacker_data.image_shape} do not fit {spec.name} '
                             f'input {spec.input_shape}')

    rng = np.random.default_rng(config.seed)
    initial = rng.normal(0.0, config.init_std, size=spec.input_shape)
    pattern = Tensor(initial, requires_grad=True, dtype=get_default_dtype())
    frozen = surrogate.frozen()
    optimizer = Adam([pattern], lr=config.lr)
    w = config.trigger_weight
    target_weight = config.target_term_weight
    if target_weight > 0 and config.target_label >= spec.num_classes:
        raise ConfigError(f'Target label {config.target_label} outside the {spec.num_classes} classes of the '
                          f'surrogate {spec.name}')

    def loss_of(images):
        return _batch_loss(frozen, spec, images, pattern, w, config.target_label, target_weight)

    eval_images = attacker_data.images[:config.batch_size]
    trace = []
    if len(eval_images) >= 2:
        trace.append(loss_of(eval_images).item())

    order_rng = np.random.default_rng([config.seed, 1])
    for epoch in range(config.steps):
        order = order_rng.permutation(len(attacker_data))
        for start in range(0, len(order), config.batch_size):
            batch = attacker_data.images[order[start:start + config.batch_size]]
            if len(batch) < 2:
                logging.warning(f'Skipping trigger batch of size {len(batch)} in epoch {epoch + 1}')
                continue
            with Tape():
                loss = loss_of(batch)
            if not np.isfinite(loss.item()):
                raise NumericError(f'Trigger loss is not finite in epoch {epoch + 1}')
            backward(loss)
            optimizer.step()
            optimizer.zero_grad()

        if len(eval_images) >= 2:
            trace.append(loss_of(eval_images).item())
            logging.info(f'Trigger epoch {epoch + 1}/{config.steps}: trigger loss {trace[-1]:.6f}')

    return Trigger(pattern.numpy(), init_seed=config.seed, steps_trained=config.steps, loss_trace=tuple(trace))


def trigger_hash(trigger):
    """
    SHA-256 over the trigger shape and its little-endian float32 values
    """
    pattern = _pattern_of(trigger)
    digest = hashlib.sha256()
    digest.update(np.array(pattern.shape, dtype='<u4').tobytes())
    digest.update(np.ascontiguousarray(pattern, dtype='<f4').tobytes())
    return digest.hexdigest()


def save_trigger(filename, trigger):
    """
    Write a trigger file: magic "SPTRIG1\\0", rank and dims (u32), values (f32),
    init_seed and steps_trained (i64), all little-endian
    """
    pattern = trigger.pattern
    with open(filename, 'wb') as fh:
        fh.write(TRIGGER_MAGIC)
        fh.write(np.array([pattern.ndim] + list(pattern.shape), dtype='<u4').tobytes())
        fh.write(np.ascontiguousarray(pattern, dtype='<f4').tobytes())
        fh.write(np.array([trigger.init_seed, trigger.steps_trained], dtype='<i8').tobytes())
    logging.info(f'Saved trigger {pattern.shape} to {filename}')


def load_trigger(filename):
    """
    Read a trigger file written by save_trigger
    :raises FormatError: bad magic, truncation or trailing bytes
    """
    reader = ByteReader(read_file(filename), filename)
    if reader.take(len(TRIGGER_MAGIC)) != TRIGGER_MAGIC:
        raise FormatError(f'{filename}: not a shadowprint trigger file')
    rank = int(reader.scalar('<u4'))
    dims = tuple(int(d) for d in reader.array('<u4', rank))
    pattern = reader.array('<f4', int(np.prod(dims))).reshape(dims)
    init_seed, steps_trained = (int(v) for v in reader.array('<i8', 2))
    if not reader.at_end():
        raise FormatError(f'{filename}: trailing bytes after the trigger record')
    return Trigger(pattern, init_seed=init_seed, steps_trained=steps_trained)
