# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

"""
Differentiable primitives.
Every function takes and returns Tensors; gradients are recorded on the active Tape.
The only implicit broadcasting supported is a bias vector added over the channel axis.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from shadowprint.misc.errors import (
    DimensionError,
    LabelIndexError,
    NumericError
)
from .Tensor import (
    Tensor,
    make_result
)


def _require_rank(name, tensor, rank):
    if tensor.ndim != rank:
        raise DimensionError(f'{name} expects a rank {rank} tensor, got shape {tensor.shape}')


def _output_size(name, size, kernel, stride, padding):
    span = size + 2 * padding - kernel
    if span < 0:
        raise DimensionError(f'{name}: kernel {kernel} larger than padded input {size + 2 * padding}')
    if span % stride != 0:
        raise DimensionError(f'{name}: non-integral output size for input {size}, kernel {kernel}, '
                             f'stride {stride}, padding {padding}')
    return span // stride + 1


def matmul(a, b):
    """
    Matrix product of a [M x K] and b [K x N]
    """
    _require_rank('matmul', a, 2)
    _require_rank('matmul', b, 2)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f'matmul: inner dimensions disagree {a.shape} x {b.shape}')

    def backward(grad):
        return grad @ b.data.T, a.data.T @ grad

    return make_result('matmul', a.data @ b.data, (a, b), backward)


def conv2d(inp, kernel, stride=1, padding=0):
    """
    2-D cross-correlation (no kernel flip)
    :param inp: Tensor [B x C x H x W]
    :param kernel: Tensor [F x C x Kh x Kw]
    :param stride: step between windows
    :param padding: zero padding applied to both spatial sides
    :return: Tensor [B x F x H' x W'], H' = (H + 2p - Kh) / stride + 1
    """
    _require_rank('conv2d', inp, 4)
    _require_rank('conv2d', kernel, 4)
    if stride < 1 or padding < 0:
        raise DimensionError(f'conv2d: invalid stride {stride} / padding {padding}')
    batch, channels, height, width = inp.shape
    filters, k_channels, k_height, k_width = kernel.shape
    if channels != k_channels:
        raise DimensionError(f'conv2d: input has {channels} channels, kernel expects {k_channels}')
    out_h = _output_size('conv2d', height, k_height, stride, padding)
    out_w = _output_size('conv2d', width, k_width, stride, padding)

    padded = np.pad(inp.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) \
        if padding > 0 else inp.data
    windows = sliding_window_view(padded, (k_height, k_width), axis=(2, 3))[:, :, ::stride, ::stride]
    # rows ordered (b, oh, ow); columns ordered (c, kh, kw) to match the kernel layout
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, -1)
    k_mat = kernel.data.reshape(filters, -1)
    out = (cols @ k_mat.T).reshape(batch, out_h, out_w, filters).transpose(0, 3, 1, 2)

    def backward(grad):
        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, filters)
        grad_kernel = (grad_rows.T @ cols).reshape(kernel.shape)
        grad_cols = (grad_rows @ k_mat).reshape(batch, out_h, out_w, channels, k_height, k_width)
        grad_padded = np.zeros(padded.shape, dtype=grad.dtype)
        h_stop = stride * (out_h - 1) + 1
        w_stop = stride * (out_w - 1) + 1
        for i in range(k_height):
            for j in range(k_width):
                grad_padded[:, :, i:i + h_stop:stride, j:j + w_stop:stride] += \
                    grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_inp = grad_padded[:, :, padding:padding + height, padding:padding + width]
        return np.ascontiguousarray(grad_inp), grad_kernel

    return make_result('conv2d', np.ascontiguousarray(out), (inp, kernel), backward)


def maxpool2d(inp, size=2, stride=None):
    """
    Max pooling over size x size windows; the gradient goes to the first maximum in row-major order
    """
    _require_rank('maxpool2d', inp, 4)
    stride = size if stride is None else stride
    batch, channels, height, width = inp.shape
    out_h = _output_size('maxpool2d', height, size, stride, 0)
    out_w = _output_size('maxpool2d', width, size, stride, 0)

    windows = sliding_window_view(inp.data, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = windows.reshape(batch, channels, out_h, out_w, size * size)
    argmax = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]

    def backward(grad):
        if stride == size:
            grad_windows = np.zeros(flat.shape, dtype=grad.dtype)
            np.put_along_axis(grad_windows, argmax[..., None], grad[..., None], axis=-1)
            grad_windows = grad_windows.reshape(batch, channels, out_h, out_w, size, size)
            grad_windows = grad_windows.transpose(0, 1, 2, 4, 3, 5).reshape(
                batch, channels, out_h * size, out_w * size)
            grad_inp = np.zeros(inp.shape, dtype=grad.dtype)
            grad_inp[:, :, :out_h * size, :out_w * size] = grad_windows
            return (grad_inp,)
        grad_inp = np.zeros(inp.shape, dtype=grad.dtype)
        b_idx, c_idx, h_idx, w_idx = np.indices(argmax.shape)
        rows = h_idx * stride + argmax // size
        cols = w_idx * stride + argmax % size
        np.add.at(grad_inp, (b_idx, c_idx, rows, cols), grad)
        return (grad_inp,)

    return make_result('maxpool2d', out, (inp,), backward)


def relu(inp):
    mask = inp.data > 0

    def backward(grad):
        return (grad * mask,)

    return make_result('relu', np.where(mask, inp.data, 0).astype(inp.dtype, copy=False), (inp,), backward)


def add(a, b):
    """
    Elementwise sum of equal-shape tensors, or bias-add when b is a vector over the channel axis of a
    """
    if a.shape == b.shape:
        def backward(grad):
            return grad, grad

        return make_result('add', a.data + b.data, (a, b), backward)

    if b.ndim == 1 and a.ndim in (2, 4) and a.shape[1] == b.shape[0]:
        axes = (0,) if a.ndim == 2 else (0, 2, 3)
        expand = (1, -1) if a.ndim == 2 else (1, -1, 1, 1)

        def bias_backward(grad):
            return grad, grad.sum(axis=axes)

        return make_result('bias_add', a.data + b.data.reshape(expand), (a, b), bias_backward)

    raise DimensionError(f'add: incompatible shapes {a.shape} and {b.shape}')


def mul(a, b):
    if a.shape != b.shape:
        raise DimensionError(f'mul: incompatible shapes {a.shape} and {b.shape}')

    def backward(grad):
        return grad * b.data, grad * a.data

    return make_result('mul', a.data * b.data, (a, b), backward)


def scale(inp, factor):
    factor = float(factor)

    def backward(grad):
        return (grad * factor,)

    return make_result('scale', inp.data * factor, (inp,), backward)


def shift(inp, offset):
    offset = float(offset)

    def backward(grad):
        return (grad,)

    return make_result('shift', inp.data + offset, (inp,), backward)


def sum(inp):  # noqa: A001
    def backward(grad):
        return (np.full(inp.shape, grad, dtype=inp.dtype),)

    return make_result('sum', np.asarray(inp.data.sum(), dtype=inp.dtype), (inp,), backward)


def mean(inp):
    count = inp.size

    def backward(grad):
        return (np.full(inp.shape, grad / count, dtype=inp.dtype),)

    return make_result('mean', np.asarray(inp.data.mean(), dtype=inp.dtype), (inp,), backward)


def flatten(inp):
    """
    Reshape [B x ...] to [B x prod(...)]
    """
    if inp.ndim < 2:
        raise DimensionError(f'flatten expects a batched tensor, got shape {inp.shape}')

    def backward(grad):
        return (grad.reshape(inp.shape),)

    return make_result('flatten', inp.data.reshape(inp.shape[0], -1), (inp,), backward)


def transpose(inp):
    _require_rank('transpose', inp, 2)

    def backward(grad):
        return (np.ascontiguousarray(grad.T),)

    return make_result('transpose', np.ascontiguousarray(inp.data.T), (inp,), backward)


def expand_batch(inp, count):
    """
    Repeat a tensor along a new leading batch axis
    """
    if count < 1:
        raise DimensionError(f'expand_batch: count must be positive, got {count}')

    def backward(grad):
        return (grad.sum(axis=0),)

    out = np.broadcast_to(inp.data, (count,) + inp.shape).copy()
    return make_result('expand_batch', out, (inp,), backward)


def clip(inp, low, high):
    """
    Clamp values to [low, high]; the gradient is zero where the input lies outside the range
    """
    inside = (inp.data >= low) & (inp.data <= high)

    def backward(grad):
        return (grad * inside,)

    return make_result('clip', np.clip(inp.data, low, high), (inp,), backward)


def l2_normalize_rows(inp):
    """
    Divide every row of a [N x E] tensor by its euclidean norm
    :raises NumericError: a row has zero norm
    """
    _require_rank('l2_normalize_rows', inp, 2)
    norms = np.sqrt(np.sum(inp.data * inp.data, axis=1))
    zero_rows = np.flatnonzero(norms == 0)
    if zero_rows.size > 0:
        raise NumericError(f'l2_normalize_rows: row {int(zero_rows[0])} has zero norm')
    out = inp.data / norms[:, None]

    def backward(grad):
        radial = np.sum(grad * out, axis=1, keepdims=True)
        return ((grad - out * radial) / norms[:, None],)

    return make_result('l2_normalize_rows', out, (inp,), backward)


def softmax_cross_entropy(logits, labels):
    """
    Mean over the batch of -log softmax(logits)[label], stabilised by max-subtraction
    :param logits: Tensor [B x C]
    :param labels: integer class indices [B]
    :return: scalar Tensor
    :raises LabelIndexError: label outside [0, C)
    """
    _require_rank('softmax_cross_entropy', logits, 2)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    batch, classes = logits.shape
    if labels.shape[0] != batch:
        raise DimensionError(f'softmax_cross_entropy: {labels.shape[0]} labels for batch of {batch}')
    if np.any(labels < 0) or np.any(labels >= classes):
        raise LabelIndexError(f'softmax_cross_entropy: labels must lie in [0, {classes})')

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    log_probs = shifted[np.arange(batch), labels] - np.log(total)
    loss = np.asarray(-log_probs.mean(), dtype=logits.dtype)

    def backward(grad):
        probs = exp / total[:, None]
        probs[np.arange(batch), labels] -= 1
        return (probs * (grad / batch),)

    return make_result('softmax_cross_entropy', loss, (logits,), backward)


def numerical_gradient(fn, values, h=1e-5):
    """
    Central finite-difference gradient of a scalar function
    :param fn: function taking a numpy array of the same shape as values and returning a float
    :param values: point at which to evaluate the gradient
    :param h: step size
    :return: numpy array of partial derivatives
    """
    point = np.array(values, dtype=np.float64, copy=True)
    grad = np.zeros_like(point)
    flat_point = point.reshape(-1)
    flat_grad = grad.reshape(-1)
    for idx in range(flat_point.size):
        original = flat_point[idx]
        flat_point[idx] = original + h
        upper = fn(point)
        flat_point[idx] = original - h
        lower = fn(point)
        flat_point[idx] = original
        flat_grad[idx] = (upper - lower) / (2 * h)
    return grad


def as_tensor(values, requires_grad=False):
    """
    Wrap values in a Tensor unless they already are one
    """
    if isinstance(values, Tensor):
        return values
    return Tensor(values, requires_grad=requires_grad)
