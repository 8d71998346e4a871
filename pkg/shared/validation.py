"""
Ошибки и утилиты для валидации входных данных
"""
import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class LazyGnnError(Exception):
    """Базовая ошибка LazyGNN"""
    pass


class ValidationError(LazyGnnError, ValueError):
    """Ошибка валидации (формы, диапазоны, id узлов)"""
    pass


class ConfigError(LazyGnnError):
    """Некорректный конфиг или флаги"""
    pass


class SingularSystemError(LazyGnnError):
    """Вырожденная линейная система"""
    pass


def check_matrix(x: np.ndarray, name: str = "x") -> np.ndarray:
    """
    Проверить, что x - конечная двумерная матрица

    Args:
        x: Массив
        name: Имя для сообщения об ошибке

    Returns:
        Тот же массив
    """
    if not isinstance(x, np.ndarray) or x.ndim != 2:
        shape = getattr(x, "shape", None)
        raise ValidationError(f"{name} must be a 2-D matrix, got shape {shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite entries")
    return x


def check_same_shape(*pairs: tuple):
    """
    Проверить совпадение форм у пар (имя, матрица)
    """
    (first_name, first), *rest = pairs
    for name, x in rest:
        if x.shape != first.shape:
            raise ValidationError(
                f"Shape mismatch: {first_name} {first.shape} vs {name} {x.shape}"
            )


def check_rows(x: np.ndarray, num_rows: int, name: str = "x"):
    """
    Проверить число строк матрицы
    """
    if x.shape[0] != num_rows:
        raise ValidationError(f"{name} has {x.shape[0]} rows, expected {num_rows}")


def check_node_ids(nodes: Sequence[int], num_nodes: int, name: str = "nodes") -> np.ndarray:
    """
    Проверить id узлов и привести к int64

    Returns:
        Массив id
    """
    ids = np.asarray(nodes, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= num_nodes):
        bad = ids[(ids < 0) | (ids >= num_nodes)][0]
        raise ValidationError(f"{name}: node id {bad} out of range [0, {num_nodes})")
    return ids


def check_unit_interval(value: float, name: str, *, open_left: bool = False):
    """
    Проверить value ∈ [0, 1] (или (0, 1] при open_left)
    """
    low_ok = value > 0.0 if open_left else value >= 0.0
    if not (low_ok and value <= 1.0):
        bound = "(0, 1]" if open_left else "[0, 1]"
        raise ValidationError(f"{name} must be in {bound}, got {value}")
