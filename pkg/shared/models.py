"""
Pydantic модели: гиперпараметры, конфиг обучения, SBM, записи метрик
"""
import logging
from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from shared.config import FLOAT_DTYPE, REDUNDANCY_PROBE_SIZE
from shared.validation import ConfigError

logger = logging.getLogger(__name__)

# Ключи плоского конфига, адресующие Hyperparams
HYPERPARAM_KEYS = ("alpha", "beta", "gamma", "layers")


class Hyperparams(BaseModel):
    """
    Гиперпараметры диффузии

    alpha - вес телепорта, beta/gamma - смешивание истории в прямом/обратном
    проходе, layers - число шагов распространения за итерацию
    """
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.1, gt=0.0, le=1.0)
    beta: float = Field(default=0.5, ge=0.0, le=1.0)
    gamma: float = Field(default=0.5, ge=0.0, le=1.0)
    layers: int = Field(default=2, ge=1)


class TrainConfig(BaseModel):
    """Конфигурация обучения"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=200, ge=1)
    # 0 = полный батч
    batch_size: int = Field(default=0, ge=0)
    lr: float = Field(default=0.01, ge=0.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    seed: int = 0
    hp: Hyperparams = Field(default_factory=Hyperparams)
    eval_every: int = Field(default=1, ge=1)
    # None = столько же слоёв, сколько при обучении
    inference_layers: Optional[int] = Field(default=None, ge=1)

    hidden: int = Field(default=64, ge=1)
    mlp_layers: int = Field(default=2, ge=1)
    variant: Literal["lazy", "appnp"] = "lazy"
    # "train" - цели из обучающей маски, "all" - все узлы графа
    target_pool: Literal["all", "train"] = "train"
    add_self_loops: bool = True
    probe_size: int = Field(default=REDUNDANCY_PROBE_SIZE, ge=1)
    dtype: Literal["float64", "float32"] = FLOAT_DTYPE
    # lr = 0 разрешён только для прогонов с замороженной моделью
    allow_frozen: bool = False

    @model_validator(mode="after")
    def _check_lr(self):
        if self.lr <= 0.0 and not self.allow_frozen:
            raise ValueError("lr must be > 0 (set allow_frozen for lr = 0 probe runs)")
        return self

    @property
    def eval_layers(self) -> int:
        return self.inference_layers or self.hp.layers

    @property
    def full_batch(self) -> bool:
        return self.batch_size == 0

    def with_overrides(self, **overrides) -> "TrainConfig":
        """
        Копия конфига с изменёнными полями (alpha/beta/gamma/layers уходят в hp)
        """
        flat = self.to_flat()
        flat.update({key: value for key, value in overrides.items() if value is not None})
        return TrainConfig.from_flat(flat)

    def to_flat(self) -> Dict[str, object]:
        """Плоское представление для файла конфига"""
        flat = self.model_dump(exclude={"hp"})
        flat.update(self.hp.model_dump())
        return flat

    @classmethod
    def from_flat(cls, values: Dict[str, object]) -> "TrainConfig":
        """
        Собрать конфиг из плоского словаря

        Raises:
            ConfigError: Неизвестный ключ или значение вне диапазона
        """
        values = dict(values)
        hp_values = {key: values.pop(key) for key in HYPERPARAM_KEYS if key in values}
        if values.get("inference_layers") in ("", "None", "none"):
            values["inference_layers"] = None

        try:
            return cls(hp=Hyperparams(**hp_values), **values)
        except PydanticValidationError as e:
            raise ConfigError(f"Invalid training config: {e}") from e


class SbmSpec(BaseModel):
    """Параметры стохастической блочной модели"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    blocks: int = Field(default=4, ge=1)
    nodes_per_block: int = Field(default=250, ge=1)
    p_in: float = Field(default=0.05, gt=0.0, le=1.0)
    p_out: float = Field(default=0.005, ge=0.0, lt=1.0)
    feature_dim: int = Field(default=16, ge=1)
    feature_noise_sigma: float = Field(default=1.0, ge=0.0)
    seed: int = 0
    train_fraction: float = Field(default=0.6, gt=0.0, lt=1.0)
    val_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_ranges(self):
        if not self.p_out < self.p_in:
            raise ValueError(f"p_out ({self.p_out}) must be < p_in ({self.p_in})")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be >= blocks (one-hot block centroids)")
        if self.train_fraction + self.val_fraction >= 1.0:
            raise ValueError("train_fraction + val_fraction must leave room for test")
        return self

    @property
    def num_nodes(self) -> int:
        return self.blocks * self.nodes_per_block


class EpochRecord(BaseModel):
    """Запись метрик в точке оценки"""
    epoch: int
    iter: int
    train_loss: float
    val_accuracy: float
    # None на первой итерации: предыдущего X_L ещё нет
    redundancy: Optional[float] = Field(default=None, ge=0.0)
    wall_time_ms: float = Field(ge=0.0)
    peak_store_bytes: int = Field(ge=0)

    def csv_row(self) -> list:
        return [
            self.epoch,
            self.iter,
            repr(self.train_loss),
            repr(self.val_accuracy),
            "" if self.redundancy is None else repr(self.redundancy),
            f"{self.wall_time_ms:.3f}",
            self.peak_store_bytes,
        ]
