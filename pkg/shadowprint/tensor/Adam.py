# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from dataclasses import (
    dataclass,
    replace
)

import numpy as np

from shadowprint.misc.errors import (
    ContractError,
    DimensionError
)


@dataclass(frozen=True)
class AdamState:
    """
    Moment estimates and hyperparameters of one Adam-optimised parameter array
    """
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.m.shape != self.v.shape or self.m.ndim != 1:
            raise DimensionError(f'Adam moments must be flat arrays of equal length: '
                                 f'{self.m.shape} vs {self.v.shape}')
        if self.step_count < 0:
            raise ContractError(f'Adam step count must be non-negative, got {self.step_count}')

    @classmethod
    def zeros(cls, size, dtype=np.float64, **hyperparameters):
        """
        Create the initial state for a parameter of the given length
        :param size: number of parameter values
        :param dtype: moment dtype
        :param hyperparameters: lr, beta1, beta2, epsilon overrides
        :return: AdamState
        """
        return cls(m=np.zeros(size, dtype=dtype), v=np.zeros(size, dtype=dtype), **hyperparameters)


def adam_step(state, params, grads):
    """
    Apply one bias-corrected Adam update (Kingma & Ba)
    :param state: AdamState for params
    :param params: parameter values (any shape, length = state length)
    :param grads: gradient values, same shape as params
    :return: tuple of (updated params, updated state); the inputs are not modified
    :rtype: tuple
    :raises DimensionError: lengths disagree
    """
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape:
        raise DimensionError(f'adam_step: params {params.shape} and grads {grads.shape} disagree')
    if params.size != state.m.size:
        raise DimensionError(f'adam_step: {params.size} params for state of length {state.m.size}')

    step = state.step_count + 1
    g = grads.reshape(-1).astype(state.m.dtype, copy=False)
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

    new_params = (params.reshape(-1) - update).astype(params.dtype, copy=False).reshape(params.shape)
    return new_params, replace(state, m=m, v=v, step_count=step)


def sgd_momentum_step(velocity, params, grads, lr, momentum):
    """
    Apply one heavy-ball SGD update: v <- momentum * v + g; p <- p - lr * v
    :return: tuple of (updated params, updated velocity)
    """
    params = np.asarray(params)
    grads = np.asarray(grads)
    if params.shape != grads.shape or velocity.shape != params.shape:
        raise DimensionError(f'sgd_momentum_step: shapes disagree {params.shape}, {grads.shape}, '
                             f'{velocity.shape}')
    velocity = momentum * velocity + grads
    return (params - lr * velocity).astype(params.dtype, copy=False), velocity


class Adam:
    """
    Adam optimiser over a list of parameter tensors, one AdamState per tensor
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.states = [AdamState.zeros(p.size, dtype=p.dtype, lr=lr, beta1=beta1, beta2=beta2,
                                       epsilon=epsilon)
                       for p in self.params]

    def step(self):
        """
        Update every parameter holding a gradient
        """
        for idx, param in enumerate(self.params):
            if param.grad is None:
                continue
            param.data, self.states[idx] = adam_step(self.states[idx], param.data, param.grad)

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()


class SGDMomentum:
    """
    SGD with momentum over a list of parameter tensors
    """

    def __init__(self, params, lr=1e-2, momentum=0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros(p.shape, dtype=p.dtype) for p in self.params]

    def step(self):
        for idx, param in enumerate(self.params):
            if param.grad is None:
                continue
            param.data, self.velocities[idx] = sgd_momentum_step(
                self.velocities[idx], param.data, param.grad, self.lr, self.momentum)

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()
