# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import NumericalAbort, ShapeError
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class AdamState():
    """First and second moments per parameter name, plus the step counter."""

    def __init__(self, params:Sequence[Tuple[str, Tensor]], beta1:float=BETA1, beta2:float=BETA2, eps:float=EPS):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m:Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params}
        self.v:Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params}

    def names(self) -> List[str]:
        return list(self.m)


def adam_step(params:Sequence[Tuple[str, Tensor]], state:AdamState, lr:float):
    """Bias-corrected Adam update in place; gradients are zeroed afterwards.

    A parameter without a gradient is treated as having a zero gradient. Every
    gradient is checked before anything is modified, so an abort leaves the
    parameters and moments untouched.
    """
    grads = []
    for name, p in params:
        if name not in state.m:
            raise ShapeError(f"Adam state has no moments for parameter {name}")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != state.m[name].shape:
            raise ShapeError(f"Gradient of {name} has shape {g.shape}, expected {state.m[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalAbort(f"Non-finite gradient in parameter {name}")
        grads.append(g)

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for (name, p), g in zip(params, grads):
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g*g
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
        p.zero_grad()


@dataclass(frozen=True)
class LrSchedule:
    initial: float = 0.001
    gamma: float = 0.95
    enabled: bool = False


def lr_at(schedule:LrSchedule, epoch:int) -> float:
    """Per-epoch exponential decay, initial * gamma**epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if not schedule.enabled:
        return schedule.initial
    return schedule.initial * schedule.gamma**epoch
