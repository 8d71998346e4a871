"""
Абляции: число слоёв, смешивание β/γ, LazyGNN против APPNP, MLP без диффузии
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.dataset import Dataset
from shared.models import TrainConfig
from shared.validation import ValidationError
from trainer.service import LazyGnnTrainer

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

Grid = Sequence[Tuple[str, Dict[str, object]]]


@dataclass
class AblationRow:
    name: str
    accuracies: List[float] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies))


def default_grid() -> Grid:
    """Сетка по умолчанию: L, (β, γ), APPNP при равном L и α = 1 (только MLP)"""
    grid = [(f"lazy L={layers}", {"layers": layers}) for layers in (1, 2, 4)]
    grid += [
        (f"lazy beta={beta} gamma={gamma}", {"beta": beta, "gamma": gamma})
        for beta, gamma in ((0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.5, 1.0), (1.0, 0.5))
    ]
    grid += [(f"appnp L={layers}", {"variant": "appnp", "layers": layers}) for layers in (1, 2, 10)]
    grid.append(("mlp", {"variant": "appnp", "alpha": 1.0, "layers": 1}))
    return grid


def run_ablation(
    dataset: Dataset,
    base_cfg: TrainConfig,
    grid: Optional[Grid] = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
) -> List[AblationRow]:
    """
    Обучить каждый вариант на каждом seed и собрать точность на тесте

    Returns:
        Строки со средним и разбросом тестовой точности по seed
    """
    if not dataset.test_mask.any():
        raise ValidationError("Ablation needs a non-empty test mask")

    rows = []
    for name, overrides in grid or default_grid():
        row = AblationRow(name=name)
        for seed in seeds:
            cfg = base_cfg.with_overrides(seed=seed, **overrides)
            trainer = LazyGnnTrainer(dataset, cfg)
            trainer.train()
            row.accuracies.append(trainer.evaluate(dataset.test_mask))
        logger.info(f"Ablation {name}: {row.mean_accuracy:.4f} ± {row.std_accuracy:.4f}")
        rows.append(row)
    return rows
