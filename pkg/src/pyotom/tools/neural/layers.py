"""
Dense tensor kernels for the recurrent and fully connected estimators.

Sequences are time-major, (T, B, features), and carry a (T, B) mask of valid
steps. A masked step leaves both the hidden and cell state untouched, so a
right-padded batch gives the same results as evaluating each sequence on its
own. LSTM gate order is [input, forget, cell, output].
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit

from ...utils.exceptions import DomainError

_logger = logging.getLogger(__name__)

__all__ = ["GATES", "relu", "lstmCellForward", "lstmLayerForward", "lstmLayerBackward", "denseForward",
           "denseBackward", "l1Loss"]

GATES = ("input", "forget", "cell", "output")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _checkLstmShapes(x, h, W, U, b):
    four_h, hidden = U.shape
    if four_h != 4 * hidden:
        raise DomainError(f"Recurrent weights must be (4H, H), got {U.shape}")
    if W.shape != (four_h, x.shape[-1]):
        raise DomainError(f"Input weights must be ({four_h}, {x.shape[-1]}), got {W.shape}")
    if b.shape != (four_h,):
        raise DomainError(f"Bias must be ({four_h},), got {b.shape}")
    if h.shape[-1] != hidden:
        raise DomainError(f"Hidden state must have {hidden} units, got {h.shape[-1]}")


def _gates(z: np.ndarray, hidden: int):
    i = expit(z[..., :hidden])
    f = expit(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = expit(z[..., 3 * hidden:])
    return i, f, g, o


def lstmCellForward(x, h, c, weights: dict) -> tuple[np.ndarray, np.ndarray]:
    """
    One LSTM step: c' = f*c + i*g, h' = o*tanh(c').

    :param x: Input, should be an ndarray (..., in)
    :param h: Hidden state, should be an ndarray (..., H)
    :param c: Cell state, should be an ndarray (..., H)
    :param weights: 'W' (4H, in), 'U' (4H, H) and 'b' (4H,), should be a dict
    :return: h', c' - tuple[ndarray, ndarray]
    """
    x, h, c = (np.asarray(value, dtype=np.float64) for value in (x, h, c))
    W, U, b = (np.asarray(weights[name], dtype=np.float64) for name in ("W", "U", "b"))
    _checkLstmShapes(x, h, W, U, b)
    if c.shape != h.shape:
        raise DomainError(f"Cell state shape {c.shape} does not match hidden state {h.shape}")

    i, f, g, o = _gates(x @ W.T + h @ U.T + b, U.shape[1])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def lstmLayerForward(xs: np.ndarray, mask: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray,
                     reverse: bool = False) -> tuple[np.ndarray, list]:
    """
    Run one direction of an LSTM layer over a padded batch.

    :return: hs, cache - tuple[ndarray (T, B, H), list]
    """
    steps, batch, _ = xs.shape
    hidden = U.shape[1]
    _checkLstmShapes(xs[0] if steps else np.zeros((batch, W.shape[1])), np.zeros((batch, hidden)), W, U, b)

    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    hs = np.zeros((steps, batch, hidden))
    cache = [None] * steps
    for t in (reversed(range(steps)) if reverse else range(steps)):
        m = mask[t][:, None]
        i, f, g, o = _gates(xs[t] @ W.T + h @ U.T + b, hidden)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        cache[t] = (h, c, i, f, g, o, tanh_c)
        h = m * (o * tanh_c) + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        hs[t] = h
    return hs, cache


def lstmLayerBackward(dhs: np.ndarray, xs: np.ndarray, mask: np.ndarray, W: np.ndarray, U: np.ndarray,
                      cache: list, reverse: bool = False):
    """
    Backpropagation through time for one direction.

    :param dhs: Loss gradient of every emitted hidden state, should be an ndarray (T, B, H)
    :return: dxs, dW, dU, db
    """
    steps, batch, hidden = dhs.shape
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(W.shape[0])
    dxs = np.zeros(xs.shape)
    dh = np.zeros((batch, hidden))
    dc = np.zeros((batch, hidden))
    for t in (range(steps) if reverse else reversed(range(steps))):
        m = mask[t][:, None]
        h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
        dh = dh + dhs[t]

        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1.0 - tanh_c ** 2)
        dz = np.concatenate([dc_new * g * i * (1.0 - i),
                             dc_new * c_prev * f * (1.0 - f),
                             dc_new * i * (1.0 - g ** 2),
                             dh_new * tanh_c * o * (1.0 - o)], axis=-1)

        dW += dz.T @ xs[t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dxs[t] = dz @ W
        dh = dz @ U + (1.0 - m) * dh
        dc = dc_new * f + (1.0 - m) * dc
    return dxs, dW, dU, db


def denseForward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ W.T + b


def denseBackward(dout: np.ndarray, x: np.ndarray, W: np.ndarray):
    """:return: dx, dW, db"""
    return dout @ W, dout.T @ x, dout.sum(axis=0)


def l1Loss(prediction, target) -> tuple[float, np.ndarray]:
    """
    Mean absolute error over components and batch, and its gradient with
    respect to the prediction (subgradient 0 where they are equal).
    """
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise DomainError(f"Prediction shape {prediction.shape} does not match target {target.shape}")
    difference = prediction - target
    return float(np.mean(np.abs(difference))), np.sign(difference) / difference.size
