# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

"""
Dense tensor with reverse-mode automatic differentiation.

Differentiable operations are recorded on the innermost active Tape when at
least one input requires a gradient. A tape supports exactly one backward pass.
"""

import threading
from collections import namedtuple
from contextlib import contextmanager

import numpy as np

from shadowprint.misc.errors import (
    ContractError,
    DimensionError,
    NumericError,
    StateError
)

_local = threading.local()

SUPPORTED_DTYPES = (np.float32, np.float64)

Node = namedtuple('Node', ['name', 'output', 'inputs', 'backward'])


def get_default_dtype():
    """
    Get the floating point type used for new tensors in the current thread
    :return: numpy dtype class
    """
    return getattr(_local, 'dtype', np.float32)


def set_default_dtype(dtype):
    """
    Set the floating point type used for new tensors in the current thread
    :param dtype: np.float32 (training/attack runs) or np.float64 (gradient verification)
    """
    dtype = np.dtype(dtype).type
    if dtype not in SUPPORTED_DTYPES:
        raise ContractError(f'Unsupported tensor dtype: {dtype}')
    _local.dtype = dtype


@contextmanager
def precision(dtype):
    """
    Temporarily switch the default tensor dtype, e.g. `with precision(np.float64): ...`
    """
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def _tape_stack():
    stack = getattr(_local, 'tapes', None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def check_finite(array, what):
    if not np.all(np.isfinite(array)):
        raise NumericError(f'{what} produced non-finite values')


class Tape:
    """
    Ordered record of executed differentiable operations.
    Use as a context manager around the forward computation, then call backward() on the loss.
    """

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise StateError('Tape has already been consumed by a backward pass')
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    @staticmethod
    def active():
        """
        Get the innermost active tape of the current thread
        :return: Tape or None
        """
        stack = _tape_stack()
        return stack[-1] if stack else None

    def record(self, name, output, inputs, backward):
        if self.consumed:
            raise StateError('Cannot record on a consumed tape')
        output._tape = self
        self.nodes.append(Node(name, output, tuple(inputs), backward))

    def __len__(self):
        return len(self.nodes)


class Tensor:
    """
    n-dimensional array of real numbers with optional gradient tape participation
    """

    def __init__(self, data, requires_grad=False, dtype=None):
        """
        Initialise object
        :param data: array-like values; copied
        :param requires_grad: participate in gradient computation as a leaf
        :param dtype: optional dtype; defaults to the thread's default dtype
        """
        dtype = get_default_dtype() if dtype is None else np.dtype(dtype).type
        array = np.array(data, dtype=dtype, copy=True)
        if any(dim <= 0 for dim in array.shape):
            raise DimensionError(f'Tensor dimensions must be positive: {array.shape}')
        check_finite(array, 'Tensor construction')
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @classmethod
    def _wrap(cls, array, requires_grad=False):
        """ Wrap an op result without copying """
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor._tape = None
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        if self.data.size != 1:
            raise ContractError(f'item() requires a single element tensor, got shape {self.shape}')
        return float(self.data.reshape(()))

    def numpy(self):
        """
        Get a copy of the values
        :return: numpy array
        """
        return self.data.copy()

    def detach(self):
        """
        Get a tensor sharing values but not participating in gradient computation
        """
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f'Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})'


def make_result(name, array, inputs, backward):
    """
    Wrap the output of an operation and record it on the active tape when required
    :param name: operation name, used in error messages
    :param array: output values
    :param inputs: input tensors
    :param backward: function mapping output gradient to a tuple of input gradients
    :return: output tensor
    """
    check_finite(array, name)
    tape = Tape.active()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(array, requires_grad=needs_grad)
    if needs_grad:
        tape.record(name, out, inputs, backward)
    return out


def backward(loss):
    """
    Populate the grad of every leaf tensor that requires a gradient and contributed to loss.
    Leaf gradients are overwritten, not accumulated across passes.
    :param loss: scalar tensor produced on an active tape
    :raises ContractError: loss is not a scalar or was not produced on a tape
    :raises StateError: the tape has already been consumed
    """
    if not isinstance(loss, Tensor) or loss.ndim != 0:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss)
        raise ContractError(f'backward() requires a scalar loss, got {shape}')
    tape = loss._tape
    if tape is None:
        raise ContractError('Loss was not produced from an active tape')
    if tape.consumed:
        raise StateError('Tape has already been consumed; run a new forward trace')

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        grad_out = grads.pop(id(node.output), None)
        if grad_out is None:
            continue
        input_grads = node.backward(grad_out)
        for inp, grad_in in zip(node.inputs, input_grads):
            if grad_in is None or not inp.requires_grad:
                continue
            if grad_in.shape != inp.shape:
                raise DimensionError(f'{node.name} backward produced gradient of shape {grad_in.shape} '
                                     f'for input of shape {inp.shape}')
            key = id(inp)
            if inp._tape is tape:
                grads[key] = grads[key] + grad_in if key in grads else grad_in
            else:
                entry = leaves.get(key)
                leaves[key] = (inp, grad_in if entry is None else entry[1] + grad_in)

    for leaf, grad in leaves.values():
        check_finite(grad, 'backward')
        leaf.grad = grad.astype(leaf.dtype, copy=False)

    tape.consumed = True
    tape.nodes = []
