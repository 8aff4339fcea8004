"""AdamW (Adam with decoupled weight decay) on image-shaped parameters."""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = ["AdamWState", "adamw_step"]


@dataclass(frozen=True, eq=False)
class AdamWState:
    """Moments and hyperparameters of one AdamW run.

    ``lr`` is the learning rate and ``weight_decay`` the decoupled decay
    factor; a step scales the parameter by ``1 - lr * weight_decay`` before
    the adaptive update. Moments start at zero and are allocated on the first
    step.
    """

    lr: float = 0.01
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    t: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("decay rates must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")


def adamw_step(state, param, grad):
    """One AdamW update.

    Returns
    -------
    state : AdamWState
        New state with updated moments and ``t + 1``.
    param : ndarray
        ``(1 - lr * wd) * param - lr * m_hat / (sqrt(s_hat) + eps)``.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape:
        raise ValueError(f"shape mismatch: param {param.shape} vs grad {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient contains non-finite values")
    m = np.zeros_like(param) if state.m is None else state.m
    s = np.zeros_like(param) if state.s is None else state.s
    if m.shape != param.shape:
        raise ValueError(f"shape mismatch: state {m.shape} vs param {param.shape}")

    t = state.t + 1
    m = state.beta1 * m + (1.0 - state.beta1) * grad
    s = state.beta2 * s + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    s_hat = s / (1.0 - state.beta2**t)
    new = (1.0 - state.lr * state.weight_decay) * param - state.lr * m_hat / (np.sqrt(s_hat) + state.eps)
    return replace(state, m=m, s=s, t=t), new
