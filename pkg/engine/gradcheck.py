"""
Центральные конечные разности (оракул для проверок градиента)
"""
import logging
from typing import Callable, List, Union

import numpy as np

from engine.mlp import MlpParams

logger = logging.getLogger(__name__)

Params = Union[MlpParams, np.ndarray]


def finite_difference(
    fn: Callable[[Params], float],
    params: Params,
    eps: float = 1e-5,
) -> Union[List[np.ndarray], np.ndarray]:
    """
    Численный градиент fn по каждому параметру

    Args:
        fn: Детерминированная функция параметров (seed dropout заморожен)
        params: MlpParams или массив
        eps: Шаг

    Returns:
        Для MlpParams - список массивов в порядке params.tensors(), иначе массив
    """
    if isinstance(params, np.ndarray):
        return _central_differences(fn, params.astype(np.float64), eps)

    base = [t.astype(np.float64) for t in params.tensors()]
    grads = []
    for index in range(len(base)):
        def probe(arr, index=index):
            tensors = list(base)
            tensors[index] = arr
            return fn(params.replace_tensors(tensors))
        grads.append(_central_differences(probe, base[index], eps))
    return grads


def _central_differences(fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(x)
    work = x.copy()
    for idx in np.ndindex(x.shape):
        original = work[idx]
        work[idx] = original + eps
        upper = fn(work.copy())
        work[idx] = original - eps
        lower = fn(work.copy())
        work[idx] = original
        grad[idx] = (upper - lower) / (2.0 * eps)
    return grad
