"""
Сервис обучения LazyGNN: полный батч, мини-батчи, оценка, избыточность вычислений
"""
import logging
import math
import time
from typing import List, Optional, Tuple

import numpy as np

from engine.losses import softmax_cross_entropy
from engine.memory import LazyState
from engine.mlp import MlpParams, init_mlp, mlp_backward, mlp_forward
from engine.optim import AdamState, adam_step
from engine.propagation import (
    fixed_point_solve,
    lazy_backward,
    lazy_forward,
    propagate_backward,
    propagate_forward,
)
from shared.dataset import Dataset
from shared.graph import SparseGraph, sample_lhop
from shared.models import EpochRecord, TrainConfig
from shared.validation import ValidationError
from trainer.metrics import MetricsWriter

logger = logging.getLogger(__name__)

# Независимые потоки PRNG внутри одного seed
DROPOUT_STREAM = 1
SHUFFLE_STREAM = 2
PROBE_STREAM = 3


def _stream_seed(seed: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, stream, index]).generate_state(1)[0])


def redundancy_probe(prev_xl: np.ndarray, cur_xl: np.ndarray) -> float:
    """
    Относительное изменение ‖X^{k+1} − X^k‖_F / ‖X^k‖_F

    Raises:
        ValidationError: Формы различаются или ‖prev‖ = 0
    """
    if prev_xl.shape != cur_xl.shape:
        raise ValidationError(f"Shape mismatch: {prev_xl.shape} vs {cur_xl.shape}")
    prev_norm = float(np.linalg.norm(prev_xl))
    if prev_norm == 0.0:
        raise ValidationError("redundancy_probe: previous matrix has zero norm")
    return float(np.linalg.norm(cur_xl - prev_xl)) / prev_norm


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Доля верных argmax (ничья → меньший id класса) на маске"""
    if not mask.any():
        raise ValidationError("accuracy needs a non-empty mask")
    predictions = np.argmax(logits[mask], axis=1)
    return float(np.mean(predictions == labels[mask]))


def evaluate(
    params: MlpParams,
    state: Optional[LazyState],
    graph: SparseGraph,
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    cfg: TrainConfig,
) -> float:
    """
    Точность: MLP без dropout → X_0 из M_fea с весом β → L_eval шагов → argmax

    Args:
        state: Ленивое состояние; None для варианта без истории

    Returns:
        Доля верных предсказаний на маске
    """
    if not mask.any():
        raise ValidationError("evaluate needs a non-empty mask")

    x_in, _ = mlp_forward(params, features, mode="eval")
    hp = cfg.hp.model_copy(update={"layers": cfg.eval_layers})
    if state is None:
        x_l = propagate_forward(graph, x_in, x_in, hp.alpha, hp.layers)
    else:
        history = state.m_fea.astype(x_in.dtype, copy=False)
        x_l = lazy_forward(graph, history, x_in, hp, fresh=~state.fea_initialized)
    return accuracy(x_l, labels, mask)


def evaluate_converged(
    params: MlpParams,
    graph: SparseGraph,
    features: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    cfg: TrainConfig,
    tol: float = 1e-8,
) -> float:
    """
    Точность на неподвижной точке X* для логитов в режиме eval
    """
    x_in, _ = mlp_forward(params, features, mode="eval")
    x_star = fixed_point_solve(graph, x_in, cfg.hp.alpha, tol=tol)
    return accuracy(x_star, labels, mask)


class LazyGnnTrainer:
    """
    Обучение LazyGNN

    Итерация k - один шаг оптимизатора (полный батч: эпоха, мини-батч: батч).
    """

    def __init__(self, dataset: Dataset, cfg: TrainConfig, metrics: Optional[MetricsWriter] = None):
        if cfg.batch_size > dataset.num_nodes:
            raise ValidationError(
                f"batch_size ({cfg.batch_size}) exceeds number of nodes ({dataset.num_nodes})"
            )
        if not dataset.train_mask.any():
            raise ValidationError("Training mask is empty")

        self.dataset = dataset
        self.cfg = cfg
        self.metrics = metrics
        self.features = dataset.features.astype(cfg.dtype, copy=False)

        num_classes = dataset.num_classes
        dims = [self.features.shape[1]] + [cfg.hidden] * (cfg.mlp_layers - 1) + [num_classes]
        self.params = init_mlp(dims, cfg.dropout, cfg.seed, dtype=cfg.dtype)
        self.adam = AdamState.for_params(self.params, cfg.lr, cfg.weight_decay)
        self.state = LazyState(dataset.num_nodes, num_classes, cfg.dtype) if cfg.variant == "lazy" else None

        self.iteration = 0
        self.iteration_losses: List[float] = []
        self.redundancy_series: List[Optional[float]] = []
        self.closure_sizes: List[int] = []

        self._all_nodes = np.arange(dataset.num_nodes)
        probe_size = min(cfg.probe_size, dataset.num_nodes)
        probe_rng = np.random.default_rng(_stream_seed(cfg.seed, PROBE_STREAM, 0))
        self._probe = np.sort(probe_rng.choice(dataset.num_nodes, size=probe_size, replace=False))
        self._prev_probe: Optional[np.ndarray] = None

        logger.info(
            f"Trainer ready: variant={cfg.variant}, mode={'full' if cfg.full_batch else 'mini'}, "
            f"MLP dims={dims}, hp={cfg.hp.model_dump()}"
        )

    @property
    def store_bytes(self) -> int:
        return self.state.store_bytes if self.state is not None else 0

    # ========== Итерации ==========

    def _dropout_seed(self) -> int:
        return _stream_seed(self.cfg.seed, DROPOUT_STREAM, self.iteration)

    def full_batch_step(self) -> Tuple[float, np.ndarray]:
        """
        Одна итерация на всём графе

        Returns:
            (loss, X_L)
        """
        graph = self.dataset.graph
        hp = self.cfg.hp
        k = self.iteration

        x_in, cache = mlp_forward(self.params, self.features, mode="train", rng_seed=self._dropout_seed())

        if self.state is None:
            x_l = propagate_forward(graph, x_in, x_in, hp.alpha, hp.layers)
        else:
            history, initialized = self.state.gather("fea", self._all_nodes)
            x_l = lazy_forward(graph, history, x_in, hp, fresh=~initialized)
            self.state.scatter("fea", self._all_nodes, x_l, iteration=k)

        loss, grad_top = softmax_cross_entropy(x_l, self.dataset.labels, self.dataset.train_mask)

        if self.state is None:
            grad_in = propagate_backward(graph, grad_top, hp.alpha, hp.layers)
        else:
            grad_history, initialized = self.state.gather("grad", self._all_nodes)
            grad_in = lazy_backward(graph, grad_history, grad_top, hp, fresh=~initialized)
            self.state.scatter("grad", self._all_nodes, grad_in, iteration=k)

        grads = mlp_backward(self.params, cache, grad_in)
        self.params = adam_step(self.adam, self.params, grads)

        self.iteration += 1
        self.iteration_losses.append(loss)
        return loss, x_l

    def mini_batch_step(self, targets: np.ndarray) -> Optional[float]:
        """
        Одна итерация на L-hop подграфе целевых узлов

        Returns:
            loss или None, если среди целевых узлов нет размеченных
            (прямой проход и запись M_fea выполняются, шаг оптимизатора - нет)
        """
        hp = self.cfg.hp
        k = self.iteration
        batch = sample_lhop(self.dataset.graph, targets, hp.layers)
        local = batch.local_graph
        closure = batch.closure
        n_targets = batch.num_targets
        self.closure_sizes.append(len(closure))

        x_in, cache = mlp_forward(
            self.params, self.features[closure], mode="train", rng_seed=self._dropout_seed()
        )

        if self.state is None:
            x_l = propagate_forward(local, x_in, x_in, hp.alpha, hp.layers)
        else:
            history, initialized = self.state.gather("fea", closure)
            if logger.isEnabledFor(logging.DEBUG) and len(closure) > n_targets:
                ages = self.state.staleness("fea", closure[n_targets:], now=k)
                seen = ages[ages >= 0]
                logger.debug(
                    f"Iter {k}: neighbor rows {len(ages)}, never written {int((ages < 0).sum())}, "
                    f"mean staleness {seen.mean() if seen.size else float('nan'):.1f}"
                )
            x_l = lazy_forward(local, history, x_in, hp, fresh=~initialized)
            self.state.scatter("fea", batch.targets, x_l[:n_targets], iteration=k)

        loss_mask = np.zeros(len(closure), dtype=bool)
        loss_mask[:n_targets] = self.dataset.train_mask[batch.targets]
        if not loss_mask.any():
            logger.debug(f"Iter {k}: no labeled targets, optimizer step skipped")
            self.iteration += 1
            return None

        loss, grad_top = softmax_cross_entropy(x_l, self.dataset.labels[closure], loss_mask)

        if self.state is None:
            grad_local = propagate_backward(local, grad_top, hp.alpha, hp.layers)
        else:
            grad_history, initialized = self.state.gather("grad", closure)
            grad_local = lazy_backward(local, grad_history, grad_top, hp, fresh=~initialized)
            self.state.scatter("grad", batch.targets, grad_local[:n_targets], iteration=k)

        # правило цепочки только по целевым строкам
        grad_in = np.zeros_like(grad_local)
        grad_in[:n_targets] = grad_local[:n_targets]
        grads = mlp_backward(self.params, cache, grad_in)
        self.params = adam_step(self.adam, self.params, grads)

        self.iteration += 1
        self.iteration_losses.append(loss)
        return loss

    def _target_batches(self, epoch: int) -> List[np.ndarray]:
        if self.cfg.target_pool == "train":
            pool = np.flatnonzero(self.dataset.train_mask)
        else:
            pool = self._all_nodes
        rng = np.random.default_rng(_stream_seed(self.cfg.seed, SHUFFLE_STREAM, epoch))
        order = rng.permutation(pool)
        size = self.cfg.batch_size
        count = math.ceil(len(order) / size)
        # внутри батча узлы упорядочены по id
        return [np.sort(order[i * size:(i + 1) * size]) for i in range(count)]

    def _track_redundancy(self, current: np.ndarray) -> Optional[float]:
        value = None
        if self._prev_probe is not None and np.linalg.norm(self._prev_probe) > 0:
            value = redundancy_probe(self._prev_probe, current)
        self._prev_probe = current.copy()
        self.redundancy_series.append(value)
        return value

    def run_epoch(self, epoch: int) -> Tuple[float, Optional[float]]:
        """
        Одна эпоха обучения без оценки

        Returns:
            (средний loss эпохи, избыточность на пробном наборе)
        """
        if self.cfg.full_batch:
            loss, x_l = self.full_batch_step()
            return loss, self._track_redundancy(x_l)

        if self.cfg.batch_size < 1:
            raise ValidationError("Mini-batch training requires batch_size >= 1")
        losses = [self.mini_batch_step(targets) for targets in self._target_batches(epoch)]
        losses = [value for value in losses if value is not None]
        if not losses:
            logger.warning(f"Epoch {epoch}: no batch contained labeled targets")
        epoch_loss = float(np.mean(losses)) if losses else float("nan")

        redundancy = None
        if self.state is not None:
            redundancy = self._track_redundancy(self.state.m_fea[self._probe])
        return epoch_loss, redundancy

    # ========== Обучение ==========

    def train(self) -> List[EpochRecord]:
        """
        Обучение на cfg.epochs эпох с оценкой каждые eval_every эпох

        Returns:
            Записи метрик (последняя эпоха оценивается всегда)
        """
        records = []
        for epoch in range(1, self.cfg.epochs + 1):
            started = time.perf_counter()
            epoch_loss, redundancy = self.run_epoch(epoch)
            wall_ms = (time.perf_counter() - started) * 1000.0

            if epoch % self.cfg.eval_every and epoch != self.cfg.epochs:
                continue

            record = EpochRecord(
                epoch=epoch,
                iter=self.iteration,
                train_loss=epoch_loss,
                val_accuracy=self.evaluate(self.dataset.val_mask) if self.dataset.val_mask.any() else float("nan"),
                redundancy=redundancy,
                wall_time_ms=wall_ms,
                peak_store_bytes=self.store_bytes,
            )
            records.append(record)
            if self.metrics is not None:
                self.metrics.write(record)
            logger.info(
                f"Epoch {epoch}: loss={epoch_loss:.4f}, val_acc={record.val_accuracy:.4f}, "
                f"redundancy={'-' if redundancy is None else f'{redundancy:.3e}'}, {wall_ms:.1f} ms"
            )
        return records

    def train_full_batch(self) -> List[EpochRecord]:
        if not self.cfg.full_batch:
            raise ValidationError("train_full_batch requires batch_size = 0")
        return self.train()

    def train_mini_batch(self) -> List[EpochRecord]:
        if self.cfg.full_batch:
            raise ValidationError("train_mini_batch requires batch_size >= 1")
        return self.train()

    def evaluate(self, mask: np.ndarray) -> float:
        return evaluate(
            self.params, self.state, self.dataset.graph, self.features,
            self.dataset.labels, mask, self.cfg,
        )

    def evaluate_converged(self, mask: np.ndarray) -> float:
        return evaluate_converged(
            self.params, self.dataset.graph, self.features, self.dataset.labels, mask, self.cfg,
        )


def _dataset_from_parts(graph, features, labels, masks) -> Dataset:
    train, val, test = masks
    return Dataset(
        graph=graph,
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        train_mask=train,
        val_mask=val,
        test_mask=test,
    )


def train_full_batch(graph, features, labels, masks, cfg: TrainConfig) -> List[EpochRecord]:
    """Полнобатчевое обучение LazyGNN"""
    if not cfg.full_batch:
        cfg = cfg.model_copy(update={"batch_size": 0})
    return LazyGnnTrainer(_dataset_from_parts(graph, features, labels, masks), cfg).train_full_batch()


def train_mini_batch(graph, features, labels, masks, cfg: TrainConfig) -> List[EpochRecord]:
    """Мини-батчевое обучение LazyGNN на L-hop подграфах"""
    return LazyGnnTrainer(_dataset_from_parts(graph, features, labels, masks), cfg).train_mini_batch()
