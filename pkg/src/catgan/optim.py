"""SMORMS3: RMSprop with a per-parameter adaptive memory length.

The only hyperparameter is the maximum learning rate.  Each parameter keeps
three slots: ``mem`` (effective averaging window, starts at 1), and running
averages ``g`` and ``g2`` of the gradient and squared gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError

EPS = 1e-16
DEFAULT_MAX_LR = 1e-3


@dataclass
class Smorms3State:
    """Slots for a fixed list of parameters, stored as flat vectors."""

    max_lr: float = DEFAULT_MAX_LR
    shapes: list = field(default_factory=list)
    mem: np.ndarray = field(default_factory=lambda: np.ones(0))
    g: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mem_cap: Optional[float] = None

    @classmethod
    def for_params(cls, params, max_lr: float = DEFAULT_MAX_LR, mem_cap: Optional[float] = None) -> "Smorms3State":
        if max_lr <= 0:
            raise ContractError("max_lr must be positive")
        if mem_cap is not None and mem_cap < 1:
            raise ContractError("mem_cap must be at least 1")
        shapes = [np.shape(_value(p)) for p in params]
        n = sum(int(np.prod(s)) for s in shapes)
        return cls(max_lr, shapes, np.ones(n), np.zeros(n), np.zeros(n), mem_cap)


def _value(p) -> np.ndarray:
    return p if isinstance(p, np.ndarray) else p.data


def smorms3_step(params, grads, state: Smorms3State) -> None:
    """Apply one descent step in place.

    ``params`` are tensors (their ``.data`` is updated) or plain arrays
    (updated in place).  A ``None`` gradient counts as zero.  Per element::

        r = 1 / (mem + 1)
        g = (1 - r) g + r grad;  g2 = (1 - r) g2 + r grad^2
        x = g^2 / (g2 + eps)
        param -= grad * min(max_lr, x) / (sqrt(g2) + eps)
        mem = 1 + mem (1 - x)
    """
    if not (len(params) == len(grads) == len(state.shapes)):
        raise ContractError(
            f"got {len(params)} params, {len(grads)} grads and {len(state.shapes)} optimizer slots"
        )
    values = [_value(p) for p in params]
    flat = []
    for v, grad, shape in zip(values, grads, state.shapes):
        if v.shape != tuple(shape):
            raise ContractError(f"parameter shape {v.shape} does not match optimizer slot {tuple(shape)}")
        if grad is None:
            flat.append(np.zeros(v.size))
            continue
        if np.shape(grad) != v.shape:
            raise ContractError(f"gradient shape {np.shape(grad)} does not match parameter {v.shape}")
        flat.append(np.ravel(grad))
    grad = np.concatenate(flat) if flat else np.zeros(0)
    r = 1.0 / (state.mem + 1.0)
    state.g = (1.0 - r) * state.g + r * grad
    state.g2 = (1.0 - r) * state.g2 + r * grad * grad
    x = state.g * state.g / (state.g2 + EPS)
    state.mem = 1.0 + state.mem * (1.0 - x)
    if state.mem_cap is not None:
        np.minimum(state.mem, state.mem_cap, out=state.mem)
    step = grad * np.minimum(state.max_lr, x) / (np.sqrt(state.g2) + EPS)
    offset = 0
    for v in values:
        v -= step[offset:offset + v.size].reshape(v.shape)
        offset += v.size
