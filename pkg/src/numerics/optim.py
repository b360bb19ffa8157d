import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from src.common.exceptions import ShapeError
from src.numerics.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **hyper,
        )


def adam_step(
    state: OptimizerState,
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
) -> bool:
    """
    Apply one bias-corrected Adam update in place.

    Returns:
        True if the update was applied, False if it was skipped because a
        gradient was non-finite.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("optimizer state, parameters and gradients must align")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")

    if not all(np.all(np.isfinite(g)) for g in grads):
        logger.warning("adam step %d skipped: non-finite gradient", state.step + 1)
        return False

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / correction1
        v_hat = state.v[k] / correction2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return True


class Adam:
    """Adam over a fixed parameter list, reading gradients from ``Tensor.grad``."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState.for_params(self.params, lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> bool:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        return adam_step(self.state, self.params, grads)
