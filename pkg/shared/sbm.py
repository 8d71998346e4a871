"""
Синтетические графы: стохастическая блочная модель и случайные графы Эрдёша-Реньи
"""
import logging
from typing import Optional

import numpy as np

from shared.config import FLOAT_DTYPE
from shared.dataset import Dataset, default_split
from shared.graph import SparseGraph, build_graph, normalize
from shared.models import SbmSpec

logger = logging.getLogger(__name__)


def _sample_pairs(rng: np.random.Generator, rows: int, cols: int, p: float) -> np.ndarray:
    """
    Независимые Bernoulli(p) по всем парам rows×cols

    Число успехов ~ Binomial(rows·cols, p), позиции - без повторов.
    """
    total = rows * cols
    if p <= 0.0 or total == 0:
        return np.empty((0, 2), dtype=np.int64)
    count = rng.binomial(total, p)
    flat = rng.choice(total, size=count, replace=False)
    flat.sort()
    return np.stack(np.divmod(flat, cols), axis=1).astype(np.int64)


def sbm_edges(sizes, p_in: float, p_out: float, rng: np.random.Generator) -> np.ndarray:
    """
    Рёбра SBM (i < j, без петель) для блоков заданных размеров
    """
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    chunks = []
    for a, size_a in enumerate(sizes):
        for b in range(a, len(sizes)):
            pairs = _sample_pairs(rng, size_a, sizes[b], p_in if a == b else p_out)
            if a == b:
                # по квадрату блока берём только верхний треугольник
                pairs = pairs[pairs[:, 0] < pairs[:, 1]]
            pairs[:, 0] += offsets[a]
            pairs[:, 1] += offsets[b]
            chunks.append(pairs)
    return np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)


def generate_sbm(spec: SbmSpec, add_self_loops: bool = True, dtype: str = FLOAT_DTYPE) -> Dataset:
    """
    Сгенерировать датасет по SBM

    Признаки = one-hot центроид блока + гауссов шум, метка = номер блока.
    PRNG - PCG64 numpy с явным seed, результат не зависит от платформы.

    Args:
        spec: Параметры модели

    Returns:
        Dataset с нормализованным графом и разбиением по seed
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    sizes = [spec.nodes_per_block] * spec.blocks
    n = spec.num_nodes

    edges = sbm_edges(sizes, spec.p_in, spec.p_out, rng)
    labels = np.repeat(np.arange(spec.blocks, dtype=np.int64), spec.nodes_per_block)

    features = np.zeros((n, spec.feature_dim), dtype=np.float64)
    features[np.arange(n), labels] = 1.0
    if spec.feature_noise_sigma > 0:
        features += rng.normal(0.0, spec.feature_noise_sigma, size=features.shape)

    test_fraction = 1.0 - spec.train_fraction - spec.val_fraction
    train, val, test = default_split(
        labels, spec.seed, (spec.train_fraction, spec.val_fraction, test_fraction)
    )

    graph = normalize(build_graph(edges, n), add_self_loops=add_self_loops)
    logger.info(
        f"Generated SBM: {spec.blocks}x{spec.nodes_per_block} nodes, "
        f"{len(edges)} edges, sigma={spec.feature_noise_sigma}"
    )
    return Dataset(
        graph=graph,
        features=features.astype(dtype),
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        edges=edges,
    )


def random_graph(
    num_nodes: int,
    p: float,
    seed: Optional[int] = None,
    add_self_loops: bool = True,
) -> SparseGraph:
    """
    Нормализованный граф Эрдёша-Реньи G(n, p)
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    edges = sbm_edges([num_nodes], p, 0.0, rng)
    return normalize(build_graph(edges, num_nodes), add_self_loops=add_self_loops)
