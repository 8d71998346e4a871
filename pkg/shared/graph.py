"""
Разреженные графы: построение, нормализация, spmm, L-hop сэмплирование
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from shared.validation import ValidationError, check_node_ids, check_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """
    CSR-представление (нормализованной) матрицы смежности

    Неизменяем после построения, поэтому безопасно разделяется между потоками.
    """
    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for arr in (self.row_ptr, self.col_idx, self.values):
            arr.setflags(write=False)

    @classmethod
    def from_scipy(cls, matrix: sp.spmatrix) -> "SparseGraph":
        csr = sp.csr_matrix(matrix)
        csr.sort_indices()
        return cls(
            num_nodes=csr.shape[0],
            row_ptr=csr.indptr.astype(np.int64),
            col_idx=csr.indices.astype(np.int64),
            values=csr.data.astype(np.float64),
        )

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr),
            shape=(self.num_nodes, self.num_nodes),
        )

    @property
    def num_entries(self) -> int:
        return int(self.row_ptr[-1])

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[node]:self.row_ptr[node + 1]]

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()


@dataclass(frozen=True, eq=False)
class SubgraphBatch:
    """
    Мини-батч: целевые узлы V1, замыкание V = V1 ∪ N_L(V1) и срез Ã по V

    Целевые узлы идут в closure первыми, затем соседи в порядке BFS.
    """
    targets: np.ndarray
    closure: np.ndarray
    local_graph: SparseGraph
    global_to_local: Dict[int, int] = field(repr=False)

    @property
    def num_targets(self) -> int:
        return len(self.targets)


def build_graph(edges: Iterable[Tuple[int, int]], num_nodes: int) -> SparseGraph:
    """
    Построить симметричный невзвешенный граф из списка рёбер

    Дубликаты схлопываются, петли сохраняются один раз.

    Args:
        edges: Пары (src, dst)
        num_nodes: Число узлов

    Returns:
        SparseGraph со значениями 1
    """
    if num_nodes <= 0:
        raise ValidationError(f"num_nodes must be positive, got {num_nodes}")

    pairs = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    pairs = pairs.reshape(-1, 2)
    check_node_ids(pairs.reshape(-1), num_nodes, name="edges")

    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    keys = np.unique(rows * num_nodes + cols)
    rows, cols = np.divmod(keys, num_nodes)

    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=row_ptr[1:])

    graph = SparseGraph(
        num_nodes=num_nodes,
        row_ptr=row_ptr,
        col_idx=cols.astype(np.int64),
        values=np.ones(len(cols), dtype=np.float64),
    )
    logger.debug(f"Built graph: {num_nodes} nodes, {graph.num_entries} stored entries")
    return graph


def normalize(graph: SparseGraph, add_self_loops: bool = True) -> SparseGraph:
    """
    Симметричная нормализация Ã = D^{-1/2} A D^{-1/2}

    Args:
        graph: Симметричный граф
        add_self_loops: Добавить недостающие петли с весом 1 до нормализации

    Returns:
        Нормализованный граф; строки с нулевой степенью остаются нулевыми
    """
    adjacency = graph.csr.copy()
    if add_self_loops:
        diagonal = adjacency.diagonal()
        missing = np.flatnonzero(diagonal == 0)
        if missing.size:
            loops = sp.csr_matrix(
                (np.ones(missing.size), (missing, missing)),
                shape=adjacency.shape,
            )
            adjacency = adjacency + loops

    degree = np.asarray(adjacency.sum(axis=1)).reshape(-1)
    inv_sqrt = np.zeros_like(degree)
    positive = degree > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(degree[positive])

    scaling = sp.diags(inv_sqrt)
    normalized = SparseGraph.from_scipy(scaling @ adjacency @ scaling)
    logger.debug(
        f"Normalized graph: self_loops={add_self_loops}, "
        f"isolated={int((~positive).sum())}"
    )
    return normalized


def spmm(graph: SparseGraph, x: np.ndarray) -> np.ndarray:
    """
    Разреженно-плотное произведение Ã·x
    """
    if x.ndim != 2:
        raise ValidationError(f"spmm expects a 2-D matrix, got shape {x.shape}")
    check_rows(x, graph.num_nodes, name="spmm operand")
    result = graph.csr @ x
    return np.asarray(result, dtype=x.dtype)


def sample_lhop(graph: SparseGraph, targets: Sequence[int], hops: int) -> SubgraphBatch:
    """
    L-hop замыкание целевых узлов и индуцированный срез Ã

    Значения среза берутся из глобальной Ã без перенормировки.

    Args:
        graph: Нормализованный граф
        targets: Целевые узлы V1 (порядок сохраняется)
        hops: Глубина L >= 1

    Returns:
        SubgraphBatch
    """
    target_ids = check_node_ids(targets, graph.num_nodes, name="targets")
    if target_ids.size == 0:
        raise ValidationError("targets must be non-empty")
    if hops < 1:
        raise ValidationError(f"hops must be >= 1, got {hops}")

    # Дубликаты в targets отбрасываются, порядок первого появления сохраняется
    _, first = np.unique(target_ids, return_index=True)
    target_ids = target_ids[np.sort(first)]

    visited = np.zeros(graph.num_nodes, dtype=bool)
    visited[target_ids] = True
    order = [target_ids]
    frontier = target_ids

    for _ in range(hops):
        if frontier.size == 0:
            break
        starts = graph.row_ptr[frontier]
        ends = graph.row_ptr[frontier + 1]
        found = np.concatenate([graph.col_idx[s:e] for s, e in zip(starts, ends)])
        # порядок обнаружения BFS
        _, first = np.unique(found, return_index=True)
        discovered = found[np.sort(first)]
        discovered = discovered[~visited[discovered]]
        visited[discovered] = True
        order.append(discovered)
        frontier = discovered

    closure = np.concatenate(order)
    local = graph.csr[closure][:, closure]
    batch = SubgraphBatch(
        targets=target_ids,
        closure=closure,
        local_graph=SparseGraph.from_scipy(local),
        global_to_local={int(node): i for i, node in enumerate(closure)},
    )
    logger.debug(f"Sampled batch: {batch.num_targets} targets, closure {len(closure)}")
    return batch

