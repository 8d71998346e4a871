"""
Softmax cross-entropy по размеченным узлам
"""
import logging
from typing import Tuple

import numpy as np
from scipy.special import log_softmax

from shared.validation import ValidationError

logger = logging.getLogger(__name__)


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
) -> Tuple[float, np.ndarray]:
    """
    Средняя кросс-энтропия по узлам маски и её градиент по логитам

    Args:
        logits: N×C
        labels: Метки классов (вне маски не используются)
        mask: Булева маска размеченных узлов

    Returns:
        (loss, ∂L/∂logits); строки вне маски точно нулевые
    """
    if logits.ndim != 2:
        raise ValidationError(f"logits must be a 2-D matrix, got shape {logits.shape}")
    if mask.shape != (logits.shape[0],) or labels.shape != (logits.shape[0],):
        raise ValidationError(
            f"labels {labels.shape} and mask {mask.shape} must have {logits.shape[0]} entries"
        )
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValidationError("softmax_cross_entropy needs a non-empty label mask")

    targets = labels[rows]
    num_classes = logits.shape[1]
    if targets.min() < 0 or targets.max() >= num_classes:
        raise ValidationError(f"labels in mask must be in [0, {num_classes})")

    log_probs = log_softmax(logits[rows], axis=1)
    picked = log_probs[np.arange(rows.size), targets]
    loss = float(-picked.mean())

    grad = np.zeros_like(logits)
    probs = np.exp(log_probs)
    probs[np.arange(rows.size), targets] -= 1.0
    grad[rows] = probs / rows.size
    return loss, grad
