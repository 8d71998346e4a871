"""
Конфигурация приложения
"""
import logging
from pathlib import Path
from typing import Dict, Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

from shared.validation import ConfigError

logger = logging.getLogger(__name__)

# Базовые пути
BASE_DIR = Path(__file__).parent.parent


class LazyGnnSettings(BaseSettings):
    """Настройки окружения (префикс LAZYGNN_, опционально .env)"""
    model_config = SettingsConfigDict(
        env_prefix="LAZYGNN_",
        env_file=".env",
        extra="ignore",
    )

    data_dir: Path = BASE_DIR / "data"
    log_level: str = "INFO"
    float_dtype: Literal["float64", "float32"] = "float64"


_settings = LazyGnnSettings()

# Пути
DATA_DIR = _settings.data_dir
LOGS_DIR = DATA_DIR / "logs"
RUNS_DIR = DATA_DIR / "runs"

# Логирование
LOG_LEVEL = _settings.log_level
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Точность вычислений
FLOAT_DTYPE = _settings.float_dtype

# Диффузия
FIXED_POINT_HARD_CAP = 100_000
FIXED_POINT_EXTRA_ITERATIONS = 16
DENSE_SOLVE_MAX_NODES = 512

# Оптимизатор Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Метрики
REDUNDANCY_PROBE_SIZE = 1024
METRICS_HEADER = ["epoch", "iter", "train_loss", "val_acc", "redundancy", "wall_ms", "store_bytes"]

# Бинарные форматы
FEATURE_MAGIC = b"LZFT"
FEATURE_VERSION = 1
STATE_MAGIC = b"LZST"
STATE_VERSION = 1

# Стандартные имена файлов датасета и прогона
EDGES_FILE = "edges.tsv"
FEATURES_BINARY_FILE = "features.lzft"
FEATURES_CSV_FILE = "features.csv"
LABELS_FILE = "labels.csv"
SPLITS_FILE = "splits.csv"
METRICS_FILE = "metrics.csv"
RESOLVED_CONFIG_FILE = "config.resolved"
PARAMS_FILE = "params.npz"
STATE_FILE = "state.lzst"

# Разбиение по умолчанию (train/val/test)
DEFAULT_SPLIT = (0.6, 0.2, 0.2)


def read_config_file(path: Path) -> Dict[str, str]:
    """
    Прочитать плоский конфиг `key = value`

    Args:
        path: Путь к файлу

    Returns:
        Словарь строковых значений (приведение типов делает TrainConfig)

    Raises:
        ConfigError: Файл не найден или строка без '='
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value

    logger.debug(f"Loaded {len(values)} keys from {path}")
    return values


def write_config_file(path: Path, values: Dict[str, object]):
    """
    Записать разрешённый конфиг рядом с метриками
    """
    lines = [f"{key} = {value}" for key, value in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
