from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ...utils.exceptions import DomainError

_logger = logging.getLogger(__name__)

__all__ = ["AdamState", "adamStep", "stepLearningRate"]


@dataclass
class AdamState:
    """First/second moment accumulators per parameter tensor."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fromParams(cls, params: dict[str, np.ndarray], **kwargs) -> AdamState:
        return cls({name: np.zeros_like(value) for name, value in params.items()},
                   {name: np.zeros_like(value) for name, value in params.items()}, **kwargs)


def adamStep(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> dict[str, np.ndarray]:
    """
    One bias-corrected ADAM update, applied to params in place.

    :return: params - dict[str, ndarray]
    """
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise DomainError(f"Gradient of '{name}' has shape {grad.shape}, expected {value.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad ** 2
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


def stepLearningRate(epoch: int, init: float, factor: float, every: int) -> float:
    """Learning rate of a 1-based epoch: init * factor^floor((epoch - 1) / every)."""
    if epoch < 1 or every < 1:
        raise DomainError(f"Epochs and decay period are 1-based, got epoch={epoch}, every={every}")
    return init * factor ** ((epoch - 1) // every)
