"""
Оптимизатор Adam с раздельным weight decay
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from engine.mlp import MlpGrads, MlpParams
from shared.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from shared.validation import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Моменты по каждому параметру и счётчик шагов"""
    lr: float
    weight_decay: float = 0.0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: MlpParams, lr: float, weight_decay: float = 0.0) -> "AdamState":
        tensors = params.tensors()
        return cls(
            lr=lr,
            weight_decay=weight_decay,
            first_moment=[np.zeros_like(t) for t in tensors],
            second_moment=[np.zeros_like(t) for t in tensors],
        )


def adam_step(state: AdamState, params: MlpParams, grads: MlpGrads) -> MlpParams:
    """
    Один шаг Adam с поправкой смещения

    θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + ε). Моменты в state обновляются на месте.

    Returns:
        Новые параметры
    """
    tensors = params.tensors()
    grad_tensors = grads.tensors()
    if len(grad_tensors) != len(tensors) or len(state.first_moment) != len(tensors):
        raise ValidationError("Adam state, params and grads must have the same structure")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    updated = []
    for i, (theta, g) in enumerate(zip(tensors, grad_tensors)):
        if g.shape != theta.shape:
            raise ValidationError(f"Gradient {i} shape {g.shape} != parameter shape {theta.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g

        m_hat = m / correction1
        v_hat = v / correction2
        new_theta = theta - state.lr * state.weight_decay * theta
        new_theta = new_theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated.append(new_theta.astype(theta.dtype, copy=False))

    return params.replace_tensors(updated)
