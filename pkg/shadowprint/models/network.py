# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from shadowprint.misc.binary_io import (
    ByteReader,
    read_file
)
from shadowprint.misc.errors import (
    ConfigError,
    DimensionError,
    FormatError
)
from shadowprint.tensor import (
    Tensor,
    get_default_dtype,
    functional as F
)
from .ModelSpec import EmbeddingTap

CHECKPOINT_MAGIC = b'SPMODEL1'


@dataclass(frozen=True)
class ModelParams:
    """
    Weight and bias tensors of every parametric layer, in layer order (weight, bias, weight, bias, ...)
    """
    tensors: tuple
    init_seed: int

    def checksum(self):
        """
        SHA-256 over the little-endian float32 values of every tensor
        :return: hex digest
        :rtype: str
        """
        digest = hashlib.sha256()
        for tensor in self.tensors:
            digest.update(np.asarray(tensor.data, dtype='<f4').tobytes())
        return digest.hexdigest()

    def frozen(self):
        """
        Copies of the parameters that do not participate in gradient computation
        """
        return ModelParams(tuple(t.detach() for t in self.tensors), self.init_seed)

    def trainable_copy(self):
        """
        Private, gradient-enabled copies of the parameters
        """
        return ModelParams(tuple(Tensor(t.data, requires_grad=True, dtype=t.dtype) for t in self.tensors),
                           self.init_seed)


def validate_params(params, spec):
    expected = [shape for pair in spec.param_shapes() for shape in pair]
    if len(expected) != len(params.tensors):
        raise DimensionError(f'{spec.name}: expected {len(expected)} parameter tensors, '
                             f'got {len(params.tensors)}')
    for idx, (shape, tensor) in enumerate(zip(expected, params.tensors)):
        if tuple(shape) != tensor.shape:
            raise DimensionError(f'{spec.name}: parameter {idx} has shape {tensor.shape}, expected {shape}')


def build_model(spec, seed):
    """
    He-initialised weights and zero biases, reproducible from seed
    :param spec: ModelSpec
    :param seed: integer seed
    :return: ModelParams
    """
    if spec is None:
        raise ConfigError('Missing model spec')
    rng = np.random.default_rng(seed)
    dtype = get_default_dtype()
    tensors = []
    for weight_shape, bias_shape in spec.param_shapes():
        fan_in = int(np.prod(weight_shape[1:])) if len(weight_shape) == 4 else weight_shape[0]
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=weight_shape)
        tensors.append(Tensor(weight, dtype=dtype))
        tensors.append(Tensor(np.zeros(bias_shape), dtype=dtype))
    logging.debug(f'Built {spec.name} with {len(tensors)} parameter tensors (seed {seed})')
    return ModelParams(tuple(tensors), seed)


def forward(params, spec, batch):
    """
    Run the classifier
    :param params: ModelParams
    :param spec: ModelSpec
    :param batch: Tensor [B x C x H x W]
    :return: tuple of (logits [B x num_classes], embedding [B x E]); with tap LAST_FC_OUTPUT the embedding
             is the logits tensor itself
    :rtype: tuple
    """
    if batch.ndim != 4 or batch.shape[1:] != spec.input_shape:
        raise DimensionError(f'{spec.name} expects batches of shape (B,) + {spec.input_shape}, got {batch.shape}')

    last_linear = spec.last_linear_index
    tensors = iter(params.tensors)
    out = batch
    penultimate = None
    for idx, layer in enumerate(spec.layers):
        if layer.kind == 'conv':
            weight, bias = next(tensors), next(tensors)
            out = F.add(F.conv2d(out, weight, stride=layer.stride, padding=layer.padding), bias)
        elif layer.kind == 'pool':
            out = F.maxpool2d(out, size=layer.kernel_size, stride=layer.stride)
        elif layer.kind == 'relu':
            out = F.relu(out)
        elif layer.kind == 'flatten':
            out = F.flatten(out)
        elif layer.kind == 'linear':
            if idx == last_linear:
                penultimate = out
            weight, bias = next(tensors), next(tensors)
            out = F.add(F.matmul(out, weight), bias)

    if spec.embedding_tap == EmbeddingTap.LAST_FC_INPUT:
        return out, penultimate
    return out, out


def predict(params, spec, images, batch_size=256):
    """
    Batched inference without gradient recording
    :param images: numpy array [N x C x H x W]
    :return: predicted labels; ties resolve to the lowest class index
    :rtype: numpy.ndarray
    """
    logits = predict_logits(params, spec, images, batch_size=batch_size)
    return np.argmax(logits, axis=1)


def predict_logits(params, spec, images, batch_size=256):
    logits, _ = _batched(params, spec, images, batch_size)
    return logits


def embed(params, spec, images, batch_size=256):
    """
    Embeddings at the spec's tap for every image
    """
    _, embeddings = _batched(params, spec, images, batch_size)
    return embeddings


def _batched(params, spec, images, batch_size):
    images = np.asarray(images)
    if len(images) == 0:
        return np.zeros((0, spec.num_classes)), np.zeros((0, spec.embedding_width))
    frozen = params.frozen()
    logits, embeddings = [], []
    for start in range(0, len(images), batch_size):
        batch = Tensor(images[start:start + batch_size], dtype=frozen.tensors[0].dtype)
        out, emb = forward(frozen, spec, batch)
        logits.append(out.data)
        embeddings.append(emb.data)
    return np.concatenate(logits), np.concatenate(embeddings)


def save_checkpoint(filename, params, spec):
    """
    Write a model checkpoint:
    magic "SPMODEL1", spec name length (u32) + UTF-8 bytes, then per tensor rank (u32), dims (u32 each)
    and values as float32, all little-endian
    """
    validate_params(params, spec)
    name = spec.name.encode('utf-8')
    with open(filename, 'wb') as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array([len(name)], dtype='<u4').tobytes())
        fh.write(name)
        for tensor in params.tensors:
            fh.write(np.array([tensor.ndim] + list(tensor.shape), dtype='<u4').tobytes())
            fh.write(np.ascontiguousarray(tensor.data, dtype='<f4').tobytes())
    logging.info(f'Saved {spec.name} checkpoint to {filename}')


def load_checkpoint(filename, spec, init_seed=0):
    """
    Read a model checkpoint written by save_checkpoint
    :param filename: checkpoint path
    :param spec: ModelSpec the checkpoint must match
    :return: ModelParams
    :raises FormatError: bad magic, spec name or tensor shape
    """
    reader = ByteReader(read_file(filename), filename)
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise FormatError(f'{filename}: not a shadowprint model checkpoint')
    name_len = int(reader.scalar('<u4'))
    name = reader.take(name_len).decode('utf-8')
    if name != spec.name:
        raise FormatError(f'{filename}: checkpoint is for {name}, not {spec.name}')

    tensors = []
    for shape in [s for pair in spec.param_shapes() for s in pair]:
        rank = int(reader.scalar('<u4'))
        dims = tuple(int(d) for d in reader.array('<u4', rank))
        if dims != tuple(shape):
            raise FormatError(f'{filename}: tensor {len(tensors)} has shape {dims}, expected {shape}')
        values = reader.array('<f4', int(np.prod(dims))).reshape(dims)
        tensors.append(Tensor(values))
    if not reader.at_end():
        raise FormatError(f'{filename}: trailing bytes after the last tensor')
    return ModelParams(tuple(tensors), init_seed)

