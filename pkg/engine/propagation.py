"""
Диффузия: целевая функция денойзинга, прямое/обратное распространение
(обычное и ленивое), неподвижная точка и неявный градиент
"""
import logging
import math
from typing import Optional

import numpy as np
import scipy.linalg

from shared.config import DENSE_SOLVE_MAX_NODES, FIXED_POINT_EXTRA_ITERATIONS, FIXED_POINT_HARD_CAP
from shared.graph import SparseGraph, spmm
from shared.models import Hyperparams
from shared.validation import (
    LazyGnnError,
    SingularSystemError,
    ValidationError,
    check_matrix,
    check_rows,
    check_same_shape,
    check_unit_interval,
)

logger = logging.getLogger(__name__)


class ConvergenceError(LazyGnnError):
    """Итерация не сошлась за отведённое число шагов"""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def _check_operands(graph: SparseGraph, **matrices: np.ndarray):
    pairs = list(matrices.items())
    for name, x in pairs:
        check_matrix(x, name=name)
        check_rows(x, graph.num_nodes, name=name)
    if len(pairs) > 1:
        check_same_shape(*pairs)


def _mix(history: np.ndarray, current: np.ndarray, weight: float, fresh: Optional[np.ndarray]) -> np.ndarray:
    """
    (1 - weight)·history + weight·current; строки fresh берут current как есть
    """
    if weight == 1.0:
        return current
    mixed = (1.0 - weight) * history + weight * current
    if fresh is not None and fresh.any():
        mixed[fresh] = current[fresh]
    return mixed


def denoise_objective(graph: SparseGraph, x: np.ndarray, x_in: np.ndarray, alpha: float) -> float:
    """
    ‖X − X_in‖²_F + (1/α − 1)·tr(Xᵀ(I − Ã)X)
    """
    _check_operands(graph, x=x, x_in=x_in)
    check_unit_interval(alpha, "alpha", open_left=True)

    diff = x - x_in
    fidelity = float(np.sum(diff * diff))
    smoothness = float(np.sum(x * (x - spmm(graph, x))))
    return fidelity + (1.0 / alpha - 1.0) * smoothness


def propagate_forward(
    graph: SparseGraph,
    x0: np.ndarray,
    x_in: np.ndarray,
    alpha: float,
    layers: int,
) -> np.ndarray:
    """
    L шагов X_{l+1} = (1 − α)ÃX_l + αX_in, начиная с x0

    Returns:
        X_L
    """
    _check_operands(graph, x0=x0, x_in=x_in)
    if layers < 1:
        raise ValidationError(f"layers must be >= 1, got {layers}")

    teleport = alpha * x_in
    decay = 1.0 - alpha
    x = x0
    for _ in range(layers):
        x = decay * spmm(graph, x) + teleport
    return x


def lazy_forward(
    graph: SparseGraph,
    history: np.ndarray,
    x_in: np.ndarray,
    hp: Hyperparams,
    fresh: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Ленивый прямой проход: X_0 = (1 − β)X_L^{k−1} + βX_in, затем L шагов

    Args:
        history: X_L предыдущей итерации
        x_in: Текущий выход MLP
        fresh: Строки без истории (для них X_0 = X_in)

    Returns:
        X_L текущей итерации (вызывающий сохраняет его как новую историю)
    """
    _check_operands(graph, history=history, x_in=x_in)
    x0 = _mix(history, x_in, hp.beta, fresh)
    return propagate_forward(graph, x0, x_in, hp.alpha, hp.layers)


def fixed_point_residual(graph: SparseGraph, x: np.ndarray, x_in: np.ndarray, alpha: float) -> float:
    """
    ‖g(X, X_in)‖_F, g = X − X_in + (1/α − 1)(I − Ã)X
    """
    _check_operands(graph, x=x, x_in=x_in)
    g = x - x_in + (1.0 / alpha - 1.0) * (x - spmm(graph, x))
    return float(np.linalg.norm(g))


def fixed_point_iterations(alpha: float, tol: float, initial_ratio: float = 1.0) -> int:
    """
    Лимит итераций: ceil(log(tol)/log(1 − α)) + 16, не больше 10⁵

    initial_ratio - начальная относительная невязка; при > 1 лимит
    увеличивается на log(initial_ratio)/log(1/(1 − α)).
    """
    if alpha >= 1.0:
        return 1
    rate = math.log(1.0 - alpha)
    base = math.ceil(math.log(tol) / rate) + FIXED_POINT_EXTRA_ITERATIONS
    extra = math.ceil(math.log(initial_ratio) / -rate) if initial_ratio > 1.0 else 0
    return min(base + extra, FIXED_POINT_HARD_CAP)


def _dense_system(graph: SparseGraph, alpha: float) -> np.ndarray:
    return np.eye(graph.num_nodes) - (1.0 - alpha) * graph.to_dense()


def _dense_solve(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(system, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularSystemError(f"I - (1 - alpha)Ã is not positive definite: {e}") from e


def fixed_point_solve(
    graph: SparseGraph,
    x_in: np.ndarray,
    alpha: float,
    tol: float = 1e-10,
) -> np.ndarray:
    """
    Неподвижная точка X* = α(I − (1 − α)Ã)^{−1}X_in

    Для N <= 512 - плотное решение, иначе итерации до невязки
    ‖g(X*, X_in)‖_F <= tol·(1 + ‖X_in‖_F). Решение и невязка считаются
    в float64, результат приводится к dtype X_in.

    Raises:
        ConvergenceError: Невязка не достигнута за лимит итераций
    """
    _check_operands(graph, x_in=x_in)
    check_unit_interval(alpha, "alpha", open_left=True)

    if alpha == 1.0:
        return x_in.copy()

    target = x_in.astype(np.float64, copy=False)
    threshold = tol * (1.0 + float(np.linalg.norm(target)))

    if graph.num_nodes <= DENSE_SOLVE_MAX_NODES:
        solution = alpha * _dense_solve(_dense_system(graph, alpha), target)
        residual = fixed_point_residual(graph, solution, target, alpha)
        if residual > threshold:
            raise ConvergenceError("Dense fixed-point solve inaccurate", residual, 0)
        return solution.astype(x_in.dtype, copy=False)

    # g(X_k) = (X_k − X_{k+1}) / α, невязка достаётся бесплатно
    x = target
    residual = fixed_point_residual(graph, x, target, alpha)
    limit = fixed_point_iterations(alpha, tol, residual / max(threshold / tol, 1e-300))
    teleport = alpha * target
    for iteration in range(1, limit + 1):
        x_next = (1.0 - alpha) * spmm(graph, x) + teleport
        residual = float(np.linalg.norm(x - x_next)) / alpha
        x = x_next
        if residual <= threshold:
            logger.debug(f"Fixed point reached in {iteration} iterations, residual={residual:.3e}")
            return x.astype(x_in.dtype, copy=False)

    raise ConvergenceError("Fixed-point iteration did not converge", residual, limit)


def implicit_grad_reference(graph: SparseGraph, grad_at_fixed_point: np.ndarray, alpha: float) -> np.ndarray:
    """
    Неявный градиент ∂L/∂X_in = α(I − (1 − α)Ã)^{−1}·∂L/∂X*

    Ã симметрична, поэтому строчная форма сводится к решению системы
    по столбцам признаков. Только для N <= 512.

    Raises:
        SingularSystemError: Система вырождена
    """
    _check_operands(graph, grad_at_fixed_point=grad_at_fixed_point)
    check_unit_interval(alpha, "alpha", open_left=True)
    if graph.num_nodes > DENSE_SOLVE_MAX_NODES:
        raise ValidationError(
            f"implicit_grad_reference is a dense oracle (N <= {DENSE_SOLVE_MAX_NODES}), got N={graph.num_nodes}"
        )
    if alpha == 1.0:
        return grad_at_fixed_point.copy()

    system = _dense_system(graph, alpha)
    return alpha * _dense_solve(system, grad_at_fixed_point.astype(np.float64))


def propagate_backward(graph: SparseGraph, grad_top: np.ndarray, alpha: float, layers: int) -> np.ndarray:
    """
    G_L = ∂L/∂X_L; G_l = (1 − α)ÃG_{l+1} + α·∂L/∂X_L

    Ã симметрична: это тот же прямой проход с x0 = x_in = grad_top.

    Returns:
        G_0
    """
    _check_operands(graph, grad_top=grad_top)
    return propagate_forward(graph, grad_top, grad_top, alpha, layers)


def lazy_backward(
    graph: SparseGraph,
    grad_history: np.ndarray,
    grad_top: np.ndarray,
    hp: Hyperparams,
    fresh: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Ленивый обратный проход: G_L = (1 − γ)·∂L/∂X_in^{k−1} + γ·∂L/∂X_L^k

    Args:
        grad_history: Градиент по X_in предыдущей итерации
        grad_top: ∂L/∂X_L текущей итерации
        fresh: Строки без истории (для них G_L = grad_top)

    Returns:
        G_0 - оценка ∂L/∂X_in (вызывающий сохраняет её как новую историю)
    """
    _check_operands(graph, grad_history=grad_history, grad_top=grad_top)
    g_top = _mix(grad_history, grad_top, hp.gamma, fresh)
    return propagate_forward(graph, g_top, grad_top, hp.alpha, hp.layers)


def lazy_limit_reference(graph: SparseGraph, x_in: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """
    Предел самоподачи lazy_forward при замороженном X_in

    С M = (1 − α)Ã предел совпадает с X* только при β = 0; иначе
    X̂ − X* = (I − (1 − β)M^L)^{−1}·βM^L(X_in − X*).
    Плотный оракул (N <= 512). Для lazy_backward подставить γ и grad_top.
    """
    _check_operands(graph, x_in=x_in)
    if graph.num_nodes > DENSE_SOLVE_MAX_NODES:
        raise ValidationError(f"lazy_limit_reference is a dense oracle (N <= {DENSE_SOLVE_MAX_NODES})")

    x_star = fixed_point_solve(graph, x_in, hp.alpha, tol=1e-12)
    step = np.linalg.matrix_power((1.0 - hp.alpha) * graph.to_dense(), hp.layers)
    system = np.eye(graph.num_nodes) - (1.0 - hp.beta) * step
    bias = np.linalg.solve(system, hp.beta * step @ (x_in - x_star))
    return x_star + bias
