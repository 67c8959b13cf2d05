from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from phdae_cli.error import DimensionMismatch

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> 'AdamState':
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params, grad, state: AdamState, lr: float, mask: Optional[np.ndarray] = None):
    """
    One bias-corrected Adam update. Returns (new params, new state); inputs are not modified.

    Entries where ``mask`` is False keep their value and their moments.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise DimensionMismatch('adam_step', params.shape, (grad.shape, state.m.shape))

    t = state.t + 1
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t

    m = BETA1 * state.m + (1.0 - BETA1) * grad
    v = BETA2 * state.v + (1.0 - BETA2) * (grad * grad)
    update = (lr / bc1) * m / (np.sqrt(v / bc2) + EPSILON)

    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        m = np.where(mask, m, state.m)
        v = np.where(mask, v, state.v)
        update = np.where(mask, update, 0.0)

    return params - update, replace(state, m=m, v=v, t=t)
