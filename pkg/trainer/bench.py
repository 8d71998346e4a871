"""
Бенчмарк: время эпохи и объём хранилищ по вариантам и числу слоёв
"""
import logging
import statistics
import time
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from shared.dataset import Dataset
from shared.graph import SparseGraph, spmm
from shared.models import TrainConfig
from trainer.service import LazyGnnTrainer

logger = logging.getLogger(__name__)

WARMUP_EPOCHS = 2
TIMED_EPOCHS = 5


@dataclass(frozen=True)
class BenchRow:
    variant: str
    layers: int
    sec_per_epoch: float
    store_bytes: int


def bench(
    dataset: Dataset,
    cfg_list: Sequence[TrainConfig],
    warmup: int = WARMUP_EPOCHS,
    epochs: int = TIMED_EPOCHS,
) -> List[BenchRow]:
    """
    Медиана времени эпохи после прогрева

    Args:
        dataset: Датасет (граф и признаки общие для всех конфигов)
        cfg_list: Конфигурации для сравнения
        warmup: Эпохи прогрева (не учитываются)
        epochs: Замеряемые эпохи, не меньше 5

    Returns:
        Строки (variant, L, sec_per_epoch, store_bytes)
    """
    epochs = max(epochs, TIMED_EPOCHS)
    rows = []
    for cfg in cfg_list:
        trainer = LazyGnnTrainer(dataset, cfg)
        for epoch in range(1, warmup + 1):
            trainer.run_epoch(epoch)

        timings = []
        for epoch in range(warmup + 1, warmup + epochs + 1):
            started = time.perf_counter()
            trainer.run_epoch(epoch)
            timings.append(time.perf_counter() - started)

        row = BenchRow(
            variant=cfg.variant,
            layers=cfg.hp.layers,
            sec_per_epoch=statistics.median(timings),
            store_bytes=trainer.store_bytes,
        )
        logger.info(f"Bench {row.variant} L={row.layers}: {row.sec_per_epoch * 1000:.2f} ms/epoch, {row.store_bytes} B")
        rows.append(row)
    return rows


def bench_diffusion(
    graph: SparseGraph,
    widths: Sequence[int],
    layers: int = 2,
    repeats: int = TIMED_EPOCHS,
    seed: int = 0,
) -> List[tuple]:
    """
    Время L шагов spmm по ширине признаков H (линейность по H)

    Returns:
        [(width, median seconds)]
    """
    rng = np.random.default_rng(seed)
    results = []
    for width in widths:
        x = rng.standard_normal((graph.num_nodes, width))
        spmm(graph, x)
        timings = []
        for _ in range(repeats):
            started = time.perf_counter()
            y = x
            for _ in range(layers):
                y = spmm(graph, y)
            timings.append(time.perf_counter() - started)
        results.append((width, statistics.median(timings)))
    return results
